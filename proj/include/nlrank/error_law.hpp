#pragma once

#include <string>

#include "nlrank/random.hpp"

namespace nlrank {

enum class ErrorKind { kNormal, kLogistic, kLaplace, kCauchy };

// Symmetric error law with closed-form density, distribution and quantile
// functions.
struct ErrorLaw {
  ErrorKind kind = ErrorKind::kNormal;
  double scale = 1.0;

  static ErrorLaw from_name(const std::string& name, double scale = 1.0);
  std::string name() const;

  double density(double x) const;
  double cdf(double x) const;
  double quantile(double u) const;
  // f(F^{-1}(u)) on [0, 1], zero at the endpoints.
  double density_at_quantile(double u) const;
  double sample(Rng& rng) const { return quantile(rng.uniform()); }
};

}  // namespace nlrank
