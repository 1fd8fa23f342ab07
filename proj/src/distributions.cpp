#include "nlrank/distributions.hpp"

#include <cmath>
#include <string>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/non_central_chi_squared.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "nlrank/errors.hpp"

namespace nlrank {

namespace {

void require_df(int r) {
  if (r < 1) throw DomainError("chi-square: degrees of freedom must be >= 1");
}

}  // namespace

double chi_square_sf(double x, int r) {
  require_df(r);
  if (!(x >= 0.0)) throw DomainError("chi_square_sf: x must be >= 0");
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  return boost::math::gamma_q(0.5 * r, 0.5 * x);
}

double chi_square_quantile(double p, int r) {
  require_df(r);
  if (!(p > 0.0 && p < 1.0)) throw DomainError("chi_square_quantile: p must lie in (0, 1)");
  return boost::math::quantile(boost::math::chi_squared_distribution<double>(r), p);
}

double noncentral_chi_square_cdf(double x, int r, double noncentrality) {
  require_df(r);
  if (!(noncentrality >= 0.0)) throw DomainError("noncentrality must be >= 0");
  if (!(x >= 0.0)) throw DomainError("noncentral chi-square: x must be >= 0");
  if (noncentrality == 0.0) return 1.0 - chi_square_sf(x, r);
  return boost::math::cdf(
      boost::math::non_central_chi_squared_distribution<double>(r, noncentrality), x);
}

double normal_cdf(double x) {
  if (std::isnan(x)) throw DomainError("normal_cdf: NaN argument");
  return 0.5 * boost::math::erfc(-x / std::sqrt(2.0));
}

double normal_sf(double x) {
  if (std::isnan(x)) throw DomainError("normal_sf: NaN argument");
  return 0.5 * boost::math::erfc(x / std::sqrt(2.0));
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw DomainError("normal_quantile: p must lie in (0, 1), got " + std::to_string(p));
  }
  return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p);
}

}  // namespace nlrank
