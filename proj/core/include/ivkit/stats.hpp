#pragma once

namespace ivkit::stats {

// Thin wrappers over Boost.Math kept out of headers so the boost include
// cost is paid once.

double normal_cdf(double x);
double normal_quantile(double p);
double chi2_cdf(double x, double df);
double chi2_quantile(double p, double df);
double chi2_sf(double x, double df);  // 1 - cdf, accurate in the tail
double f_cdf(double x, double df1, double df2);
double f_sf(double x, double df1, double df2);
double f_quantile(double p, double df1, double df2);

/// P(LR > x | qt) for the conditional likelihood ratio statistic with k
/// instruments, computed by quadrature over the chi-square(k-1) component.
double clr_conditional_sf(double x, double qt, int k);

}  // namespace ivkit::stats
