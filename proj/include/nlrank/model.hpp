#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace nlrank {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using VectorRef = Eigen::Ref<const Eigen::VectorXd>;

// Slack allowed when checking that a parameter lies in its box.
inline constexpr double kBoxSlack = 1e-9;

// Compact parameter set given as per-coordinate closed intervals.
class ParamBox {
 public:
  ParamBox() = default;
  ParamBox(Vector lower, Vector upper);

  Eigen::Index size() const { return lower_.size(); }
  const Vector& lower() const { return lower_; }
  const Vector& upper() const { return upper_; }

  bool contains(const VectorRef& theta, double slack = kBoxSlack) const;
  Vector project(const VectorRef& theta) const;
  Vector center() const { return 0.5 * (lower_ + upper_); }
  double diameter() const { return (upper_ - lower_).norm(); }

 private:
  Vector lower_;
  Vector upper_;
};

// Regression family g(x, theta) = theta_0 + h(x, theta_1..theta_p).
//
// Only the non-intercept part h and its gradient are supplied; the intercept
// coordinate is added here, so the first gradient component is 1 by
// construction. Instances are immutable and safe to share between threads.
class Model {
 public:
  using PartFn = std::function<double(const VectorRef& x, const VectorRef& theta_star)>;
  using PartGradFn =
      std::function<void(const VectorRef& x, const VectorRef& theta_star, Eigen::Ref<Vector> out)>;
  using PartHessFn = std::function<Matrix(const VectorRef& x, const VectorRef& theta_star)>;

  Model(std::string family, int p, int x_dim, ParamBox box, PartFn part, PartGradFn part_grad,
        PartHessFn part_hess = {});

  const std::string& family() const { return family_; }
  // Number of non-intercept parameters.
  int p() const { return p_; }
  int num_params() const { return p_ + 1; }
  // Number of design columns the family reads.
  int x_dim() const { return x_dim_; }
  const ParamBox& box() const { return box_; }
  bool has_analytic_hessian() const { return static_cast<bool>(part_hess_); }

  // Unchecked evaluation, for inner loops where theta is known to be in the box.
  double value(const VectorRef& x, const VectorRef& theta) const;
  void gradient(const VectorRef& x, const VectorRef& theta, Eigen::Ref<Vector> out) const;

  // p x p Hessian of h over theta_1..theta_p; central differences when no
  // analytic form was supplied.
  Matrix hessian(const VectorRef& x, const VectorRef& theta) const;

  // Throws DomainError if theta has the wrong size or lies outside the box.
  void require_in_box(const VectorRef& theta) const;

  Model with_box(ParamBox box) const;

 private:
  std::string family_;
  int p_;
  int x_dim_;
  ParamBox box_;
  PartFn part_;
  PartGradFn part_grad_;
  PartHessFn part_hess_;
};

// Built-in families:
//   constant       g = t0                                  (p = 0)
//   linear         g = t0 + sum_j t_j x_j                   (p = q)
//   exponential    g = t0 + t1 exp(-t2 x)                   (p = 2)
//   biexponential  g = t0 + t1 (exp(-t2 x) - exp(-t3 x))    (p = 3)
//   logistic       g = t0 + t1 / (1 + exp(t2 - t3 x))       (p = 3)
// `q` is only consulted for the linear family.
Model make_family(const std::string& name, ParamBox box, int q = 1);
std::vector<std::string> family_names();
int family_num_params(const std::string& name, int q = 1);

// Responses, nonnegative design points and optional tested regressors.
class Dataset {
 public:
  Dataset(Vector y, Matrix x, std::optional<Matrix> z = std::nullopt);

  Eigen::Index n() const { return y_.size(); }
  Eigen::Index q() const { return x_.cols(); }
  Eigen::Index r() const { return z_ ? z_->cols() : 0; }
  bool has_z() const { return z_.has_value(); }

  const Vector& y() const { return y_; }
  const Matrix& x() const { return x_; }
  // Throws SchemaError when no tested regressors are present.
  const Matrix& z() const;

  Dataset with_y(Vector y) const;
  Dataset without_z() const;

  // n >= p + 2 and enough design columns for the family.
  void require_fits(const Model& model) const;

 private:
  Vector y_;
  Matrix x_;
  std::optional<Matrix> z_;
};

struct DesignEval {
  Matrix v;  // n x (p+1) gradient design, column 0 all ones
  Matrix q;  // (1/n) V'V
};

double eval_g(const Model& model, const VectorRef& x, const VectorRef& theta);

// Fills an n x (p+1) gradient design without box checks.
void fill_design(const Model& model, const Matrix& x, const VectorRef& theta, Matrix& v);

DesignEval eval_design(const Model& model, const Dataset& data, const VectorRef& theta);

// Largest relative discrepancy between analytic gradient entries and
// central differences with step h: |a - fd| / max(1, |a|).
double check_gradient(const Model& model, const Dataset& data, const VectorRef& theta, double h);

struct RegularityReport {
  int samples = 0;
  // Ratio (1/n) sum (g(x, t2) - g(x, t1))^2 / |t2 - t1|^2 over sampled pairs.
  double lipschitz_ratio_min = 0.0;
  double lipschitz_ratio_max = 0.0;
  double q_min_eigenvalue = 0.0;
  double q_max_eigenvalue = 0.0;
  // (1/n) sum |v_i|^4, worst sampled value.
  double fourth_moment_max = 0.0;
  double hessian_norm_max = 0.0;
  // Per gradient column: true if the sign never changed across samples.
  std::vector<bool> monotone_columns;

  bool q_positive_definite = false;
  bool lipschitz_lower_positive = false;
  bool monotone = false;
  std::vector<std::string> warnings;
};

// Sampling diagnostics for the regularity conditions. Never throws on a
// violation; problems are reported through the flags and warnings.
RegularityReport check_regularity(const Model& model, const Dataset& data, int samples,
                                  std::uint64_t seed);

}  // namespace nlrank
