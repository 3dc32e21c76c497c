#pragma once

#include <cstdint>
#include <utility>

#include "ivkit/dataset.hpp"
#include "ivkit/report.hpp"

namespace ivkit {

enum class GeniusVariant { gmm_mean, sumsq };

struct GeniusOptions {
  GeniusVariant variant = GeniusVariant::gmm_mean;
  double alpha = 0.05;
};

/// Heteroskedasticity-based moment estimator: interaction instruments
/// (Z - mean) x (first-stage residual). gmm_mean solves the averaged moment
/// equation (closed-form ratio); sumsq minimizes the per-observation
/// sum-of-squares objective (closed-form weighted ratio). Standard error
/// from the stacked-moment sandwich accounting for the first stage. Throws
/// HomoskedasticExposure when the interaction instruments carry no
/// exposure signal; warns "Homoskedastic" when the squared-residual
/// regression F is insignificant.
EstimateReport genius(const IVDataset& dataset, const GeniusOptions& options = {});

/// Parameters of the heteroskedastic-outcome likelihood model
///   Y = beta0 + beta D + Z pi + alpha D exp(eta0 + Z eta) + xi,
///   xi | D, Z ~ N(0, exp(eta0 + Z eta)).
struct MisteriParams {
  double beta0 = 0.0;
  double beta = 0.0;
  Vec pi;
  double alpha = 0.0;
  double eta0 = 0.0;
  Vec eta;

  Eigen::Index p() const { return pi.size(); }
  Eigen::Index dim() const { return 2 * p() + 4; }

  Vec pack() const;
  static MisteriParams unpack(const Vec& theta, Eigen::Index p);
};

/// Log-likelihood and analytic gradient (in pack() order: beta0, beta,
/// pi_1..pi_p, alpha, eta0, eta_1..eta_p). Throws NumericalOverflow when
/// the log-variance leaves [log 1e-12, log 1e12] on the data.
std::pair<double, Vec> misteri_loglik(const MisteriParams& params,
                                      const IVDataset& dataset);

struct MisteriOptions {
  std::uint64_t seed = 7u;
  int starts = 5;
  double alpha = 0.05;
  int max_iterations = 500;
};

struct MisteriFit {
  MisteriParams params;
  Vec se;              // same order as pack()
  double loglik = 0.0;
  Mat information;     // observed information at the optimum
  std::vector<std::string> warnings;
};

/// Maximum-likelihood fit by multi-start BFGS with analytic gradients;
/// standard errors from the inverse observed information (finite
/// differences of the gradient). Warns IdentificationWeak when the
/// log-variance slopes are jointly insignificant.
MisteriFit misteri_fit_full(const IVDataset& dataset,
                            const MisteriOptions& options = {});

/// EstimateReport wrapper around misteri_fit_full; beta_hat is the
/// treatment-effect parameter.
EstimateReport misteri_fit(const IVDataset& dataset,
                           const MisteriOptions& options = {});

}  // namespace ivkit
