#include "ivkit/reduced_form.hpp"

#include <cmath>

#include "ivkit/errors.hpp"

namespace ivkit {

double ReducedFormFit::ratio_se(Eigen::Index j) const {
  const double g = gamma_hat(j);
  const double r = ratio(j);
  const double var = (cov_GG(j, j) - 2.0 * r * cov_Gg(j, j) + r * r * cov_gg(j, j)) /
                     (g * g);
  return std::sqrt(std::max(var, 0.0));
}

double ReducedFormFit::ratio_diff_se(Eigen::Index j, Eigen::Index k) const {
  if (j == k) return 0.0;
  // gradient of ratio(j) - ratio(k) in (Gamma_j, gamma_j, Gamma_k, gamma_k)
  const double gj = gamma_hat(j);
  const double gk = gamma_hat(k);
  const double dj = 1.0 / gj;
  const double dgj = -Gamma_hat(j) / (gj * gj);
  const double dk = -1.0 / gk;
  const double dgk = Gamma_hat(k) / (gk * gk);
  const Eigen::Index pp = p();
  const Eigen::Index idx[4] = {j, pp + j, k, pp + k};
  const double grad[4] = {dj, dgj, dk, dgk};
  double var = 0.0;
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) {
      var += grad[a] * grad[b] * cov(idx[a], idx[b]);
    }
  }
  return std::sqrt(std::max(var, 0.0));
}

double ReducedFormFit::linear_combo_se(Eigen::Index j, double beta) const {
  const double var = cov_GG(j, j) - 2.0 * beta * cov_Gg(j, j) +
                     beta * beta * cov_gg(j, j);
  return std::sqrt(std::max(var, 0.0));
}

void ReducedFormFit::require_nonzero_first_stage() const {
  for (Eigen::Index j = 0; j < p(); ++j) {
    if (std::abs(gamma_hat(j)) <= 1e-12) {
      throw ZeroFirstStage("instrument " + std::to_string(j + 1) +
                           " has first-stage coefficient within 1e-12 of zero");
    }
  }
}

ReducedFormFit fit_reduced_form(const IVDataset& dataset, CovMode cov_mode) {
  if (!dataset.centered) {
    throw InvalidArgument("fit_reduced_form requires a centered dataset");
  }
  if (!has_full_column_rank(dataset.instruments)) {
    throw RankDeficient("instrument matrix is rank deficient");
  }
  const Mat& z = dataset.instruments;
  const Eigen::Index n = dataset.n();
  const Eigen::Index p = dataset.p();

  const Mat ztz = z.transpose() * z;
  const Eigen::LDLT<Mat> gram(ztz);
  ReducedFormFit fit;
  fit.gamma_hat = gram.solve(z.transpose() * dataset.exposure);
  fit.Gamma_hat = gram.solve(z.transpose() * dataset.outcome);
  fit.n = n;
  fit.source = ReducedFormFit::Source::individual;

  const Vec resid_y = dataset.outcome - z * fit.Gamma_hat;
  const Vec resid_d = dataset.exposure - z * fit.gamma_hat;

  fit.cov = Mat::Zero(2 * p, 2 * p);
  const Mat ztz_inv = gram.solve(Mat::Identity(p, p));
  if (cov_mode == CovMode::homoskedastic) {
    const double nd = static_cast<double>(n);
    const double s_yy = resid_y.squaredNorm() / nd;
    const double s_dd = resid_d.squaredNorm() / nd;
    const double s_yd = resid_y.dot(resid_d) / nd;
    fit.cov.topLeftCorner(p, p) = s_yy * ztz_inv;
    fit.cov.bottomRightCorner(p, p) = s_dd * ztz_inv;
    fit.cov.topRightCorner(p, p) = s_yd * ztz_inv;
    fit.cov.bottomLeftCorner(p, p) = s_yd * ztz_inv;
  } else {
    Mat meat_yy = Mat::Zero(p, p);
    Mat meat_dd = Mat::Zero(p, p);
    Mat meat_yd = Mat::Zero(p, p);
    // Sum_i e_i^2 z_i z_i' accumulated via scaled-row products.
    const Mat zy = z.array().colwise() * resid_y.array();
    const Mat zd = z.array().colwise() * resid_d.array();
    meat_yy = zy.transpose() * zy;
    meat_dd = zd.transpose() * zd;
    meat_yd = zy.transpose() * zd;
    fit.cov.topLeftCorner(p, p) = ztz_inv * meat_yy * ztz_inv;
    fit.cov.bottomRightCorner(p, p) = ztz_inv * meat_dd * ztz_inv;
    fit.cov.topRightCorner(p, p) = ztz_inv * meat_yd * ztz_inv;
    fit.cov.bottomLeftCorner(p, p) = fit.cov.topRightCorner(p, p).transpose();
  }

  // First-stage F for the no-intercept regression of D on Z.
  const double rss = resid_d.squaredNorm();
  const double ess = fit.gamma_hat.dot(ztz * fit.gamma_hat);
  if (n > p && rss > 0.0) {
    fit.first_stage_f = (ess / static_cast<double>(p)) /
                        (rss / static_cast<double>(n - p));
  } else {
    fit.first_stage_f = std::numeric_limits<double>::infinity();
  }
  return fit;
}

ReducedFormFit load_summary_stats(const std::vector<SummaryRecord>& records,
                                  std::optional<Eigen::Index> n) {
  if (records.empty()) throw EmptyInput("no summary records supplied");
  const Eigen::Index p = static_cast<Eigen::Index>(records.size());
  ReducedFormFit fit;
  fit.gamma_hat.resize(p);
  fit.Gamma_hat.resize(p);
  fit.cov = Mat::Zero(2 * p, 2 * p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const SummaryRecord& r = records[static_cast<std::size_t>(j)];
    if (!(r.se_gamma > 0.0) || !(r.se_Gamma > 0.0)) {
      throw NonPositiveSE("summary record " + std::to_string(j + 1) +
                          " has a non-positive standard error");
    }
    fit.gamma_hat(j) = r.gamma_hat;
    fit.Gamma_hat(j) = r.Gamma_hat;
    fit.cov(j, j) = r.se_Gamma * r.se_Gamma;
    fit.cov(p + j, p + j) = r.se_gamma * r.se_gamma;
  }
  fit.n = n;
  fit.source = ReducedFormFit::Source::summary;
  return fit;
}

std::vector<SummaryRecord> to_summary_records(const ReducedFormFit& fit) {
  std::vector<SummaryRecord> out;
  out.reserve(static_cast<std::size_t>(fit.p()));
  for (Eigen::Index j = 0; j < fit.p(); ++j) {
    out.push_back(SummaryRecord{fit.gamma_hat(j), fit.se_gamma(j),
                                fit.Gamma_hat(j), fit.se_Gamma(j)});
  }
  return out;
}

}  // namespace ivkit
