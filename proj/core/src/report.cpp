#include "ivkit/report.hpp"

#include "ivkit/stats.hpp"

namespace ivkit {

IntervalUnion wald_interval(double beta_hat, double se, double alpha) {
  const double z = stats::normal_quantile(1.0 - alpha / 2.0);
  return IntervalUnion::single(beta_hat - z * se, beta_hat + z * se);
}

}  // namespace ivkit
