#pragma once

namespace nlrank {

// Upper tail of the central chi-square law with r degrees of freedom.
double chi_square_sf(double x, int r);
double chi_square_quantile(double p, int r);
// Distribution function of the noncentral chi-square law.
double noncentral_chi_square_cdf(double x, int r, double noncentrality);

double normal_cdf(double x);
double normal_sf(double x);
double normal_quantile(double p);

}  // namespace nlrank
