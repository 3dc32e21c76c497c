#include "ivkit/stats.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace ivkit::stats {

namespace {
const boost::math::normal_distribution<double> kStdNormal(0.0, 1.0);
}

double normal_cdf(double x) { return boost::math::cdf(kStdNormal, x); }

double normal_quantile(double p) { return boost::math::quantile(kStdNormal, p); }

double chi2_cdf(double x, double df) {
  if (x <= 0.0) return 0.0;
  boost::math::chi_squared_distribution<double> d(df);
  return boost::math::cdf(d, x);
}

double chi2_sf(double x, double df) {
  if (x <= 0.0) return 1.0;
  boost::math::chi_squared_distribution<double> d(df);
  return boost::math::cdf(boost::math::complement(d, x));
}

double chi2_quantile(double p, double df) {
  boost::math::chi_squared_distribution<double> d(df);
  return boost::math::quantile(d, p);
}

double f_cdf(double x, double df1, double df2) {
  if (x <= 0.0) return 0.0;
  boost::math::fisher_f_distribution<double> d(df1, df2);
  return boost::math::cdf(d, x);
}

double f_sf(double x, double df1, double df2) {
  if (x <= 0.0) return 1.0;
  boost::math::fisher_f_distribution<double> d(df1, df2);
  return boost::math::cdf(boost::math::complement(d, x));
}

double f_quantile(double p, double df1, double df2) {
  boost::math::fisher_f_distribution<double> d(df1, df2);
  return boost::math::quantile(d, p);
}

// Conditional null distribution of the likelihood-ratio statistic given the
// identification-part statistic qt. Decompose the k-dimensional standard
// normal S into its component along T (a chi-square(1) variable a) and the
// orthogonal mass (chi-square(k-1) variable s2); then
//   LR = 0.5 * [a + s2 - qt + sqrt((a + s2 + qt)^2 - 4*qt*s2)],
// which is increasing in a, and LR > x iff a > x*(x + qt - s2)/(x + qt).
double clr_conditional_sf(double x, double qt, int k) {
  if (x <= 0.0) return 1.0;
  if (k <= 1) return chi2_sf(x, 1.0);
  const double denom = x + qt;
  auto tail_given_s2 = [&](double s2) {
    const double cut = std::max(0.0, x * (denom - s2) / denom);
    return chi2_sf(cut, 1.0);
  };
  boost::math::chi_squared_distribution<double> d(static_cast<double>(k - 1));
  const double upper = boost::math::quantile(boost::math::complement(d, 1e-13));
  auto integrand = [&](double s2) {
    return tail_given_s2(s2) * boost::math::pdf(d, s2);
  };
  const double p = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      integrand, 0.0, upper, 10, 1e-10);
  return std::clamp(p, 0.0, 1.0);
}

}  // namespace ivkit::stats
