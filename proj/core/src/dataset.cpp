#include "ivkit/dataset.hpp"

#include <Eigen/Eigenvalues>

#include "ivkit/errors.hpp"

namespace ivkit {

bool has_full_column_rank(const Mat& m, double tol) {
  if (m.cols() == 0) return true;
  if (m.rows() < m.cols()) return false;
  const Mat gram = m.transpose() * m;
  Eigen::SelfAdjointEigenSolver<Mat> eig(gram, Eigen::EigenvaluesOnly);
  const double lmax = eig.eigenvalues().maxCoeff();
  const double lmin = eig.eigenvalues().minCoeff();
  if (lmax <= 0.0) return false;
  // singular-value ratio = sqrt(eigenvalue ratio)
  return lmin > 0.0 && std::sqrt(lmin / lmax) > tol;
}

IVDataset center_and_validate(const IVDataset& dataset) {
  const Eigen::Index n = dataset.outcome.size();
  if (dataset.exposure.size() != n || dataset.instruments.rows() != n) {
    throw DimensionMismatch("outcome, exposure, and instrument rows disagree");
  }
  if (dataset.covariates && dataset.covariates->rows() != n) {
    throw DimensionMismatch("covariate rows disagree with outcome length");
  }
  const Eigen::Index p = dataset.instruments.cols();
  if (p < 1) throw DimensionMismatch("need at least one instrument");
  if (n < p + 2) {
    throw DimensionMismatch("need n >= p + 2 observations, got n = " +
                            std::to_string(n) + ", p = " + std::to_string(p));
  }

  IVDataset out = dataset;
  out.outcome.array() -= out.outcome.mean();
  out.exposure.array() -= out.exposure.mean();
  out.instruments.rowwise() -= out.instruments.colwise().mean();
  if (out.covariates) {
    out.covariates->rowwise() -= out.covariates->colwise().mean();
  }

  if (!has_full_column_rank(out.instruments)) {
    throw RankDeficient("instrument matrix is rank deficient after centering");
  }
  out.centered = true;
  return out;
}

IVDataset residualize_covariates(const IVDataset& dataset) {
  if (!dataset.covariates || dataset.covariates->cols() == 0) {
    throw InvalidArgument("residualize_covariates called without covariates");
  }
  const Mat& x = *dataset.covariates;
  if (x.rows() != dataset.outcome.size()) {
    throw DimensionMismatch("covariate rows disagree with outcome length");
  }
  if (!has_full_column_rank(x)) {
    throw RankDeficient("covariate matrix is rank deficient");
  }

  const Eigen::LDLT<Mat> gram(x.transpose() * x);
  auto residualize = [&](const Vec& v) -> Vec {
    return v - x * gram.solve(x.transpose() * v);
  };

  IVDataset out;
  out.outcome = residualize(dataset.outcome);
  out.exposure = residualize(dataset.exposure);
  out.instruments = dataset.instruments;
  for (Eigen::Index j = 0; j < out.instruments.cols(); ++j) {
    out.instruments.col(j) = residualize(dataset.instruments.col(j));
  }
  out.covariates.reset();
  out.centered = dataset.centered;
  return out;
}

CrossProducts CrossProducts::from(const IVDataset& dataset) {
  CrossProducts cp;
  const Mat& z = dataset.instruments;
  cp.ztz = z.transpose() * z;
  cp.zty = z.transpose() * dataset.outcome;
  cp.ztd = z.transpose() * dataset.exposure;
  cp.yty = dataset.outcome.squaredNorm();
  cp.ytd = dataset.outcome.dot(dataset.exposure);
  cp.dtd = dataset.exposure.squaredNorm();
  cp.n = dataset.n();
  return cp;
}

}  // namespace ivkit
