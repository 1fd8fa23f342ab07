#include "nlrank/error_law.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "nlrank/distributions.hpp"
#include "nlrank/errors.hpp"

namespace nlrank {

ErrorLaw ErrorLaw::from_name(const std::string& name, double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw DomainError("error law scale must be positive");
  if (name == "normal") return {ErrorKind::kNormal, scale};
  if (name == "logistic") return {ErrorKind::kLogistic, scale};
  if (name == "laplace") return {ErrorKind::kLaplace, scale};
  if (name == "cauchy") return {ErrorKind::kCauchy, scale};
  throw DomainError("unknown error law '" + name + "'");
}

std::string ErrorLaw::name() const {
  switch (kind) {
    case ErrorKind::kNormal: return "normal";
    case ErrorKind::kLogistic: return "logistic";
    case ErrorKind::kLaplace: return "laplace";
    case ErrorKind::kCauchy: return "cauchy";
  }
  return "unknown";
}

double ErrorLaw::density(double x) const {
  const double z = x / scale;
  switch (kind) {
    case ErrorKind::kNormal:
      return std::exp(-0.5 * z * z) / (std::sqrt(2.0 * std::numbers::pi) * scale);
    case ErrorKind::kLogistic: {
      const double e = std::exp(-std::abs(z));
      return e / ((1.0 + e) * (1.0 + e) * scale);
    }
    case ErrorKind::kLaplace:
      return std::exp(-std::abs(z)) / (2.0 * scale);
    case ErrorKind::kCauchy:
      return 1.0 / (std::numbers::pi * scale * (1.0 + z * z));
  }
  return 0.0;
}

double ErrorLaw::cdf(double x) const {
  const double z = x / scale;
  switch (kind) {
    case ErrorKind::kNormal: return normal_cdf(z);
    case ErrorKind::kLogistic: return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    case ErrorKind::kLaplace: return z < 0 ? 0.5 * std::exp(z) : 1.0 - 0.5 * std::exp(-z);
    case ErrorKind::kCauchy: return 0.5 + std::atan(z) / std::numbers::pi;
  }
  return 0.0;
}

double ErrorLaw::quantile(double u) const {
  if (!(u > 0.0 && u < 1.0)) throw DomainError("error law quantile: u must lie in (0, 1)");
  switch (kind) {
    case ErrorKind::kNormal: return scale * normal_quantile(u);
    case ErrorKind::kLogistic: return scale * std::log(u / (1.0 - u));
    case ErrorKind::kLaplace:
      return u < 0.5 ? scale * std::log(2.0 * u) : -scale * std::log(2.0 * (1.0 - u));
    case ErrorKind::kCauchy: return scale * std::tan(std::numbers::pi * (u - 0.5));
  }
  return 0.0;
}

double ErrorLaw::density_at_quantile(double u) const {
  if (!(u >= 0.0 && u <= 1.0)) throw DomainError("density_at_quantile: u outside [0, 1]");
  if (u == 0.0 || u == 1.0) return 0.0;
  switch (kind) {
    case ErrorKind::kNormal: {
      const double z = normal_quantile(u);
      return std::exp(-0.5 * z * z) / (std::sqrt(2.0 * std::numbers::pi) * scale);
    }
    case ErrorKind::kLogistic: return u * (1.0 - u) / scale;
    case ErrorKind::kLaplace: return std::min(u, 1.0 - u) / scale;
    case ErrorKind::kCauchy: {
      const double c = std::cos(std::numbers::pi * (u - 0.5));
      return c * c / (std::numbers::pi * scale);
    }
  }
  return 0.0;
}

}  // namespace nlrank
