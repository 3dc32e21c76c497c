#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ivkit/interval.hpp"

namespace ivkit {

/// Result of one estimation method: point estimate, optional inference, the
/// selected valid-instrument set when the method performs selection, and a
/// free-form numeric diagnostics map (first-stage F, tuning values, votes).
/// Instrument indices in valid_set are 0-based internally; serializers emit
/// them 1-based.
struct EstimateReport {
  std::string method;
  double beta_hat = 0.0;
  std::optional<double> se;
  std::optional<IntervalUnion> ci;
  std::optional<std::vector<int>> valid_set;
  std::map<std::string, double> diagnostics;
  std::vector<std::string> warnings;
};

/// Wald interval beta_hat +/- z_{1-alpha/2} * se. The single place this is
/// computed, so reports keep the ci == beta_hat +/- z*se identity.
IntervalUnion wald_interval(double beta_hat, double se, double alpha);

}  // namespace ivkit
