#include "nlrank/score_function.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "nlrank/errors.hpp"

namespace nlrank {

namespace {

void require_epsilon(double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 0.5)) {
    throw DomainError("score function: epsilon must lie in (0, 1/2), got " +
                      std::to_string(epsilon));
  }
}

double step_down(double u) {
  return std::nextafter(std::nextafter(u, 0.0), 0.0);
}

double step_up(double u) {
  return std::nextafter(std::nextafter(u, 1.0), 1.0);
}

}  // namespace

ScoreFunction::ScoreFunction(ScoreKind kind, std::string name, std::function<double(double)> phi,
                             std::vector<double> jumps, double epsilon)
    : kind_(kind),
      name_(std::move(name)),
      phi_(std::move(phi)),
      all_jumps_(std::move(jumps)),
      epsilon_(epsilon) {
  require_epsilon(epsilon_);
  if (!phi_) throw DomainError("score function: missing evaluation rule");
  std::sort(all_jumps_.begin(), all_jumps_.end());
  for (double s : all_jumps_) {
    if (s >= epsilon_ && s <= 1.0 - epsilon_) jumps_.push_back(s);
  }
}

ScoreFunction ScoreFunction::wilcoxon(double epsilon) {
  return ScoreFunction(ScoreKind::kWilcoxon, "wilcoxon", [](double u) { return u - 0.5; }, {},
                       epsilon);
}

ScoreFunction ScoreFunction::median(double epsilon) {
  return ScoreFunction(
      ScoreKind::kMedian, "median",
      [](double u) { return u < 0.5 ? -1.0 : (u > 0.5 ? 1.0 : 0.0); }, {0.5}, epsilon);
}

ScoreFunction ScoreFunction::custom(std::string name, std::function<double(double)> phi,
                                    std::vector<double> jump_points, double epsilon) {
  return ScoreFunction(ScoreKind::kCustom, std::move(name), std::move(phi),
                       std::move(jump_points), epsilon);
}

ScoreFunction ScoreFunction::from_name(const std::string& kind, double epsilon) {
  if (kind == "wilcoxon") return wilcoxon(epsilon);
  if (kind == "median") return median(epsilon);
  throw DomainError("unknown score function '" + kind + "' (expected wilcoxon or median)");
}

bool ScoreFunction::is_jump(double u) const {
  return std::binary_search(all_jumps_.begin(), all_jumps_.end(), u);
}

double ScoreFunction::raw_left(double u) const {
  if (!is_jump(u)) return phi_(u);
  if (kind_ == ScoreKind::kMedian) return -1.0;
  return phi_(step_down(u));
}

double ScoreFunction::raw_right(double u) const {
  if (!is_jump(u)) return phi_(u);
  if (kind_ == ScoreKind::kMedian) return 1.0;
  return phi_(step_up(u));
}

double ScoreFunction::value(double u) const {
  if (!(u >= 0.0 && u <= 1.0)) throw DomainError("score function: argument outside [0, 1]");
  if (u < epsilon_) return phi_(epsilon_);
  if (u > 1.0 - epsilon_) return phi_(1.0 - epsilon_);
  return phi_(u);
}

double ScoreFunction::left_limit(double u) const {
  if (u <= epsilon_) return phi_(epsilon_);
  if (u > 1.0 - epsilon_) return phi_(1.0 - epsilon_);
  return raw_left(u);
}

double ScoreFunction::right_limit(double u) const {
  if (u < epsilon_) return phi_(epsilon_);
  if (u >= 1.0 - epsilon_) return phi_(1.0 - epsilon_);
  return raw_right(u);
}

void ScoreFunction::validate_for_test() const {
  constexpr int kSamples = 2000;
  double prev = -std::numeric_limits<double>::infinity();
  for (int k = 1; k < kSamples; ++k) {
    const double u = static_cast<double>(k) / kSamples;
    const double v = phi_(u);
    if (!std::isfinite(v)) throw DomainError("score function '" + name_ + "' is unbounded");
    if (v < prev - 1e-12) throw DomainError("score function '" + name_ + "' is not nondecreasing");
    if (std::abs(phi_(1.0 - u) + v) > 1e-12) {
      throw DomainError("score function '" + name_ + "' is not antisymmetric about 1/2");
    }
    prev = v;
  }
}

std::function<double(double)> truncate_phi(std::function<double(double)> phi, double epsilon) {
  require_epsilon(epsilon);
  if (!phi) throw DomainError("truncate_phi: missing evaluation rule");
  const double low = phi(epsilon);
  const double high = phi(1.0 - epsilon);
  return [phi = std::move(phi), epsilon, low, high](double u) {
    if (u < epsilon) return low;
    if (u > 1.0 - epsilon) return high;
    return phi(u);
  };
}

double a_phi_squared(const ScoreFunction& phi, int panels) {
  if (panels < 1) throw DomainError("a_phi_squared: need at least one panel");
  const double h = 1.0 / panels;
  std::vector<double> values(static_cast<std::size_t>(panels));
  double mean = 0.0;
  for (int k = 0; k < panels; ++k) {
    values[static_cast<std::size_t>(k)] = phi.value((k + 0.5) * h);
    mean += values[static_cast<std::size_t>(k)];
  }
  mean *= h;
  double total = 0.0;
  for (double v : values) total += (v - mean) * (v - mean);
  return total * h;
}

}  // namespace nlrank
