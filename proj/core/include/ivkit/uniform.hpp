#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ivkit/dataset.hpp"
#include "ivkit/interval.hpp"
#include "ivkit/reduced_form.hpp"

namespace ivkit {

/// Uniform discretization of the effect axis used by the test-inversion
/// procedures.
struct SearchGrid {
  double lower = 0.0;
  double upper = 0.0;
  double step = 0.0;

  /// Number of points, endpoints inclusive. Throws InvalidArgument when the
  /// grid is malformed, GridTooCoarse below 100 points, and InvalidArgument
  /// when the point count exceeds 2e6.
  std::size_t validate() const;
  double point(std::size_t i) const { return lower + static_cast<double>(i) * step; }
};

/// Default grid spanning [min_j r_j - 10 max_j se(r_j),
/// max_j r_j + 10 max_j se(r_j)] with step min_j se(r_j) / 10, where r_j are
/// the per-instrument ratios.
SearchGrid default_search_grid(const ReducedFormFit& fit);

enum class InnerCiMethod { wald, anderson_rubin, clr };

struct UnionCiResult {
  IntervalUnion set;
  bool misspecification_flag = false;  // every subset failed the J screen
  int subsets_total = 0;
  int subsets_surviving = 0;
};

/// Union of 1-alpha_t confidence sets over all instrument subsets of size v
/// that pass the overidentification screen at level alpha_s (subsets of size
/// one skip the screen; the statistic is undefined just-identified). Wald
/// intervals are analytic; the Anderson-Rubin and conditional-likelihood-
/// ratio sets are grid inversions. Total level alpha_s + alpha_t.
UnionCiResult union_ci(const IVDataset& dataset, int v, double alpha_s,
                       double alpha_t, InnerCiMethod inner,
                       std::optional<SearchGrid> grid = std::nullopt,
                       CovMode cov_mode = CovMode::robust);

/// Number of instruments whose implied residual Gamma_j - beta * gamma_j is
/// within the z_{1-alpha/(2p)} band at this beta (the vote count of the
/// searching construction).
int searching_vote_count(const ReducedFormFit& fit, double beta, double alpha,
                         double threshold_scale = 1.0);

struct SearchingCiResult {
  IntervalUnion set;
  SearchGrid grid;
};

/// Majority-vote inversion: all grid betas where more than half the
/// instruments are consistent with the reduced-form relation. Throws
/// ZeroFirstStage, GridTooCoarse.
SearchingCiResult searching_ci(const ReducedFormFit& fit, double alpha = 0.05,
                               std::optional<SearchGrid> grid = std::nullopt);

struct SamplingCiOptions {
  int m = 500;                          // number of resamples (>= 100)
  std::optional<double> c_n;            // shrinkage constant, default 0.5
  std::uint64_t seed = 1u;
  std::optional<double> lambda_override;  // explicit shrinkage when n unknown
  std::optional<SearchGrid> grid;
};

struct SamplingCiResult {
  IntervalUnion set;          // single bracketing interval, or fallback set
  double lambda = 1.0;        // shrinkage applied to the acceptance band
  bool fallback = false;      // all resampled sets empty; searching returned
  int nonempty_resamples = 0;
};

/// Resampled variant: draws m joint-normal copies of the coefficient pair,
/// recomputes the searching set with the acceptance band shrunk by
/// lambda = c_n (log(n)/m)^(1/(2p)), and brackets the nonempty resampled
/// sets by (min lower, max upper). Requires a known sample count unless
/// lambda_override is given.
SamplingCiResult sampling_ci(const ReducedFormFit& fit, double alpha,
                             const SamplingCiOptions& options = {});

namespace detail {
/// Resampling core with an explicit resampling covariance; the public
/// sampling_ci passes the fit's covariance. Zero covariance makes every
/// resample equal the point estimates.
SamplingCiResult sampling_ci_with_cov(const ReducedFormFit& fit, double alpha,
                                      const SamplingCiOptions& options,
                                      const Mat& resample_cov);
}  // namespace detail

}  // namespace ivkit
