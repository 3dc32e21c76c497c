#pragma once

#include <optional>
#include <vector>

#include "ivkit/dataset.hpp"
#include "ivkit/reduced_form.hpp"
#include "ivkit/report.hpp"

namespace ivkit {

/// Overidentification test result.
struct JTestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  int df = 0;
};

/// Sargan/Hansen overidentification statistic from the TSLS residuals with
/// `valid_set` as instruments and the remaining columns as controls;
/// chi-square reference with |valid_set| - 1 degrees of freedom. Throws
/// Underidentified when |valid_set| < 2.
JTestResult j_test(const IVDataset& dataset, const std::vector<int>& valid_set,
                   CovMode cov_mode = CovMode::robust);

struct DownwardTestingResult {
  std::vector<int> set;
  double p_value = 0.0;
  bool all_rejected = false;
};

/// Returns the first (largest) candidate whose J-test p-value exceeds
/// `level`. Candidates of size < 2 cannot be tested and never pass; when no
/// candidate passes, the final candidate is returned with all_rejected set.
DownwardTestingResult downward_testing(
    const std::vector<std::vector<int>>& candidates, const IVDataset& dataset,
    double level, CovMode cov_mode = CovMode::robust);

/// Pairwise ratio-agreement votes: entries(j,k) = 1 iff the two instruments'
/// ratio estimates differ by at most threshold_quantile x the delta-method
/// standard error of the difference. Symmetric with a unit diagonal.
struct VotingMatrix {
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> entries;
  double threshold_quantile = 0.0;  // z_{1 - alpha/(2p)}
  Mat se_pairs;

  int votes(Eigen::Index j) const { return entries.row(j).sum(); }
};

VotingMatrix build_voting_matrix(const ReducedFormFit& fit, double alpha);

/// Voting selector: instruments with a majority of votes, joined with the
/// maximum-vote set; effect estimated by TSLS on the selection.
EstimateReport tsht(const IVDataset& dataset, double alpha = 0.05,
                    CovMode cov_mode = CovMode::robust);

/// Summary-data variant: selection is identical, the effect comes from the
/// inverse-variance-weighted estimate.
EstimateReport tsht(const ReducedFormFit& fit, double alpha = 0.05);

/// Largest set of pairwise-overlapping intervals. By the 1-D Helly property
/// this equals the maximum number of intervals covering a common point,
/// found by an endpoint sweep; `intervals` need not be sorted. When several
/// maximal sets exist they are all returned (deduplicated).
std::vector<std::vector<int>> max_overlap_sets(const std::vector<Interval>& intervals);

struct CimOptions {
  std::optional<std::vector<double>> q_grid;  // default spans documented below
  std::optional<double> level;                // downward-testing level
  double alpha = 0.05;
  CovMode cov_mode = CovMode::robust;
};

/// Working-interval clustering selector: per-instrument intervals
/// ratio_j +/- q * se(ratio_j), the largest pairwise-overlapping cluster per
/// q, q tuned by downward testing over the induced candidate sets (ties in
/// cluster size broken by the smaller J statistic). Default q grid: 30
/// values spanning [z_{0.6}, z_{1 - 0.025/p^2}].
EstimateReport cim(const IVDataset& dataset, const CimOptions& options = {});

}  // namespace ivkit
