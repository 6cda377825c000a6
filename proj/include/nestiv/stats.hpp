#pragma once

namespace nestiv {

double normal_cdf(double x);
// Inverse of normal_cdf on (0,1); rational approximation polished with one
// Halley step, accurate to near machine precision.
double normal_quantile(double p);

double chi2_cdf(double x, double df);
double chi2_sf(double x, double df);  // upper tail, 1 - cdf without cancellation
double chi2_quantile(double p, double df);

}  // namespace nestiv
