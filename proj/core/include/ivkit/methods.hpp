#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ivkit/dataset.hpp"
#include "ivkit/interval.hpp"
#include "ivkit/reduced_form.hpp"
#include "ivkit/report.hpp"
#include "ivkit/simulation.hpp"

namespace ivkit {

/// Inputs a method may draw on. `raw` is the uncentered dataset (the
/// likelihood model needs its intercepts), `centered` the validated/centered
/// version, `fit` the reduced-form summary; any may be absent depending on
/// the input kind.
struct MethodInputs {
  const IVDataset* raw = nullptr;
  const IVDataset* centered = nullptr;
  const ReducedFormFit* fit = nullptr;
  std::optional<GroundTruth> truth;  // oracle variants in simulations only
  double alpha = 0.05;
  CovMode cov_mode = CovMode::robust;
  std::uint64_t seed = 1u;
  int max_range_p = 0;  // instrument count (for option validation)
};

/// Outcome of one method run: a point-estimate report, a confidence set, or
/// both; or an error string under the partial-failure policy.
struct MethodResult {
  std::string label;
  std::optional<EstimateReport> report;
  std::optional<IntervalUnion> interval;  // interval-only procedures
  std::vector<std::string> warnings;
  std::string error;  // nonempty iff the method failed

  bool failed() const { return !error.empty(); }
};

/// Registered method names.
std::vector<std::string> registered_methods();

/// Runs one method; exceptions from the method become the error string.
/// Throws UnknownMethod / MethodOptionError for unusable specs (bad name,
/// option typo, or an input kind the method cannot digest).
MethodResult run_method(const MethodSpec& spec, const MethodInputs& inputs);

/// Validates a spec against the registry and the available input kind
/// without running it. Throws UnknownMethod or MethodOptionError.
void validate_method_spec(const MethodSpec& spec, bool individual_data,
                          int p_instruments);

}  // namespace ivkit
