#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "ivkit/dataset.hpp"

namespace ivkit {

/// One instrument's summary statistics: first-stage and outcome-regression
/// coefficients with their standard errors.
struct SummaryRecord {
  double gamma_hat = 0.0;
  double se_gamma = 0.0;
  double Gamma_hat = 0.0;
  double se_Gamma = 0.0;
};

/// Joint least-squares fit of the exposure and outcome regressions on the
/// instruments. `cov` is the finite-sample covariance matrix of the stacked
/// estimate vector (outcome coefficients first, then exposure coefficients);
/// for summary input it is diagonal with the squared standard errors.
struct ReducedFormFit {
  enum class Source { individual, summary };

  Vec gamma_hat;   // exposure-regression coefficients, length p
  Vec Gamma_hat;   // outcome-regression coefficients, length p
  Mat cov;         // 2p x 2p, [outcome block; exposure block]
  std::optional<Eigen::Index> n;
  Source source = Source::individual;
  double first_stage_f = std::numeric_limits<double>::quiet_NaN();

  Eigen::Index p() const { return gamma_hat.size(); }

  double cov_GG(Eigen::Index j, Eigen::Index k) const { return cov(j, k); }
  double cov_Gg(Eigen::Index j, Eigen::Index k) const { return cov(j, p() + k); }
  double cov_gg(Eigen::Index j, Eigen::Index k) const {
    return cov(p() + j, p() + k);
  }

  double se_Gamma(Eigen::Index j) const { return std::sqrt(cov_GG(j, j)); }
  double se_gamma(Eigen::Index j) const { return std::sqrt(cov_gg(j, j)); }

  /// Per-instrument ratio Gamma_hat[j] / gamma_hat[j].
  double ratio(Eigen::Index j) const { return Gamma_hat(j) / gamma_hat(j); }
  /// Delta-method standard error of ratio(j).
  double ratio_se(Eigen::Index j) const;
  /// Delta-method standard error of ratio(j) - ratio(k), using the full
  /// joint covariance of the four coordinates involved.
  double ratio_diff_se(Eigen::Index j, Eigen::Index k) const;
  /// Delta-method standard error of Gamma_hat[j] - beta * gamma_hat[j].
  double linear_combo_se(Eigen::Index j, double beta) const;

  /// Throws ZeroFirstStage when any |gamma_hat[j]| <= 1e-12.
  void require_nonzero_first_stage() const;
};

/// Least-squares reduced-form fit with the chosen covariance estimator.
/// Requires a centered, full-rank dataset. The homoskedastic covariance is
/// residual-(co)variance x (Z'Z)^{-1} per block; the robust one is the
/// stacked-equation sandwich.
ReducedFormFit fit_reduced_form(const IVDataset& dataset,
                                CovMode cov_mode = CovMode::robust);

/// Builds a summary-source fit from per-instrument records: diagonal
/// covariance from the squared standard errors, zero cross block. Throws
/// NonPositiveSE or EmptyInput. Operations needing the sample count fail
/// with MissingSampleSize when `n` is absent.
ReducedFormFit load_summary_stats(const std::vector<SummaryRecord>& records,
                                  std::optional<Eigen::Index> n = std::nullopt);

/// Exports an individual-level fit as summary records (used by the CSV
/// round-trip path).
std::vector<SummaryRecord> to_summary_records(const ReducedFormFit& fit);

}  // namespace ivkit
