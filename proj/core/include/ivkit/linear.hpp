#pragma once

#include <optional>
#include <vector>

#include "ivkit/dataset.hpp"
#include "ivkit/reduced_form.hpp"
#include "ivkit/report.hpp"

namespace ivkit {

inline constexpr double kDefaultAlpha = 0.05;

/// Gram-level two-stage least squares solution with Z_{V^c} as included
/// regressors. Shared by the public estimator, the overidentification test,
/// and the subset-union confidence procedure.
struct TslsSolution {
  double beta = 0.0;
  Vec control_coefs;          // coefficients on Z_{V^c}, in `controls` order
  std::vector<int> controls;  // complement of the valid set, ascending
  double rss = 0.0;           // squared norm of the structural residual
  double sigma2 = 0.0;        // rss / n
  Mat wtw_inv;                // inverse Gram of [P_Z D, Z_{V^c}]
};

TslsSolution tsls_solve(const CrossProducts& cp, const std::vector<int>& valid_set);

/// Two-stage least squares treating `valid_set` (0-based) as the valid
/// instruments and the remaining columns as included controls. Wald CI
/// attached; sandwich (or homoskedastic) standard error per `cov_mode`.
EstimateReport tsls(const IVDataset& dataset, const std::vector<int>& valid_set,
                    double alpha = kDefaultAlpha, CovMode cov_mode = CovMode::robust);

/// Least squares of the outcome on the exposure alone (no instruments); the
/// usual confounded baseline.
EstimateReport ols_estimator(const IVDataset& dataset, double alpha = kDefaultAlpha,
                             CovMode cov_mode = CovMode::robust);

/// Median of the per-instrument ratios. No standard error is attached (the
/// limiting law is a biased order statistic).
EstimateReport median_estimator(const ReducedFormFit& fit);

/// Point estimate of the k-class form D'(I - k P_Z^perp)Y / D'(I - k P_Z^perp)D
/// for an explicit k (exposed for the k = 1 identity with TSLS-all).
double kclass_point_with_k(const CrossProducts& cp, double k);

/// k-class estimator with k = (1 - 1/n) / (1 - p/n - 1/n). Throws
/// DegenerateK when the denominator of k is non-positive.
EstimateReport kclass_estimator(const IVDataset& dataset,
                                double alpha = kDefaultAlpha);

/// L1 regularization path: coefficients of the penalized first step and the
/// plug-in effect estimate at each lambda, lambdas descending from the
/// smallest value with an all-zero solution.
struct LassoPath {
  Vec lambdas;
  Mat pi_hats;    // p x L
  Vec beta_hats;  // L
};

/// Penalized least squares in covariance form: minimizes
///   0.5 pi' S pi - c' pi + lambda * sum_j weights_j |pi_j|
/// by cyclic coordinate descent (max change < 1e-9, at most 10000 sweeps).
Vec lasso_coordinate_descent(const Mat& s, const Vec& c, const Vec& weights,
                             double lambda, Vec warm_start);

struct SisviveOptions {
  std::optional<double> lambda;  // fixed penalty; absent => 10-fold CV
  int cv_folds = 10;
  std::uint64_t seed = 20240915ULL;  // fold-assignment shuffle seed
  int path_size = 100;
};

/// Penalized estimator of the direct effects with the plug-in effect
/// estimate; valid_set is the zero set of the penalized solution. Lambda
/// chosen by seeded 10-fold cross-validation on the first-step objective
/// when not supplied.
EstimateReport sisvive(const IVDataset& dataset,
                       const SisviveOptions& options = {});

/// Regularization path of the sisvive first step (unit penalty weights),
/// exposed for path-shape checks and tuning diagnostics.
LassoPath sisvive_path(const IVDataset& dataset, int path_size = 100);

struct AdaptiveLassoOptions {
  std::optional<double> level;  // downward-testing level; default 0.1/log(n)
  double alpha = kDefaultAlpha;
  CovMode cov_mode = CovMode::robust;
  int path_size = 100;
};

/// Adaptively weighted variant: penalty weights 1/|pi_med| from the
/// median-estimator initializer (capped at 1e12), tuning by the downward
/// testing procedure over the path's candidate valid sets, and a
/// post-selection least-squares refit for the reported estimate and se.
EstimateReport adaptive_lasso(const IVDataset& dataset,
                              const AdaptiveLassoOptions& options = {});

/// Inverse-variance-weighted estimate of the effect from a summary-source
/// fit restricted to `valid_set`; the summary-data analogue of TSLS used by
/// the voting selector when no individual-level data are available.
EstimateReport summary_iv_estimate(const ReducedFormFit& fit,
                                   const std::vector<int>& valid_set,
                                   double alpha = kDefaultAlpha);

}  // namespace ivkit
