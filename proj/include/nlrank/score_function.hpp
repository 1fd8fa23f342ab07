#pragma once

#include <functional>
#include <string>
#include <vector>

namespace nlrank {

enum class ScoreKind { kWilcoxon, kMedian, kCustom };

// Monotone score-generating function phi on (0, 1) together with its
// truncation phi_eps: constant phi(eps) below eps, constant phi(1 - eps)
// above 1 - eps.
class ScoreFunction {
 public:
  // phi(u) = u - 1/2
  static ScoreFunction wilcoxon(double epsilon);
  // phi(u) = -1 below 1/2, 0 at 1/2, +1 above
  static ScoreFunction median(double epsilon);
  // `jump_points` lists every discontinuity of phi; those inside
  // [eps, 1 - eps] become atoms of d phi_eps.
  static ScoreFunction custom(std::string name, std::function<double(double)> phi,
                              std::vector<double> jump_points, double epsilon);
  static ScoreFunction from_name(const std::string& kind, double epsilon);

  ScoreKind kind() const { return kind_; }
  const std::string& name() const { return name_; }
  double epsilon() const { return epsilon_; }
  // Discontinuities of phi_eps inside [eps, 1 - eps], sorted.
  const std::vector<double>& jump_points() const { return jumps_; }

  double phi(double u) const { return phi_(u); }
  // Truncated phi_eps(u), u in [0, 1].
  double value(double u) const;
  double left_limit(double u) const;
  double right_limit(double u) const;

  // Checks, on a fine sample, that phi is nondecreasing, bounded and
  // antisymmetric (phi(1 - u) = -phi(u)) as the rank tests require. Throws
  // DomainError otherwise.
  void validate_for_test() const;

 private:
  ScoreFunction(ScoreKind kind, std::string name, std::function<double(double)> phi,
                std::vector<double> jumps, double epsilon);
  bool is_jump(double u) const;
  double raw_left(double u) const;
  double raw_right(double u) const;

  ScoreKind kind_;
  std::string name_;
  std::function<double(double)> phi_;
  std::vector<double> all_jumps_;
  std::vector<double> jumps_;
  double epsilon_;
};

// phi_eps as a standalone evaluation rule.
std::function<double(double)> truncate_phi(std::function<double(double)> phi, double epsilon);

// Variance integral (A(phi_eps))^2 = int (phi_eps - mean)^2 du by the
// midpoint rule on `panels` uniform panels.
double a_phi_squared(const ScoreFunction& phi, int panels = 10000);

}  // namespace nlrank
