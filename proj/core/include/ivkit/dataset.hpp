#pragma once

#include <optional>

#include <Eigen/Dense>

namespace ivkit {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Covariance estimator choice shared across fitting routines.
enum class CovMode { homoskedastic, robust };

/// Individual-level data: outcome Y (n), exposure D (n), instruments Z
/// (n x p), optional covariates X (n x q). `centered` records whether
/// center_and_validate has run.
struct IVDataset {
  Vec outcome;
  Vec exposure;
  Mat instruments;
  std::optional<Mat> covariates;
  bool centered = false;

  Eigen::Index n() const { return outcome.size(); }
  Eigen::Index p() const { return instruments.cols(); }
};

/// Relative singular-value cutoff below which a design matrix is treated as
/// rank deficient.
inline constexpr double kRankTolerance = 1e-8;

/// Checks shapes and n >= p + 2, subtracts column means from outcome,
/// exposure, instruments (and covariates when present), verifies the
/// instrument matrix has full column rank, and sets the centered flag.
/// Throws DimensionMismatch or RankDeficient.
IVDataset center_and_validate(const IVDataset& dataset);

/// Replaces outcome, exposure, and every instrument column by their
/// residuals from least squares on the covariates, then clears the
/// covariate block. Throws RankDeficient when the covariate matrix is rank
/// deficient, InvalidArgument when no covariates are present.
IVDataset residualize_covariates(const IVDataset& dataset);

/// Smallest/largest singular values of a column block, via the p x p Gram
/// matrix (cheap for tall-thin designs).
bool has_full_column_rank(const Mat& m, double tol = kRankTolerance);

/// Cross products of [Z Y D], sufficient for every projection-based
/// estimator and test (point estimates, Sargan screens, AR/CLR inversion).
/// One O(n p^2) pass at construction; everything downstream is O(p^3).
struct CrossProducts {
  Mat ztz;    // p x p
  Vec zty;    // p
  Vec ztd;    // p
  double yty = 0.0;
  double ytd = 0.0;
  double dtd = 0.0;
  Eigen::Index n = 0;

  static CrossProducts from(const IVDataset& dataset);

  Eigen::Index p() const { return ztz.rows(); }
};

}  // namespace ivkit
