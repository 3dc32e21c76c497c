#include "ivkit/hetero.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "ivkit/errors.hpp"
#include "ivkit/optim.hpp"
#include "ivkit/rng.hpp"
#include "ivkit/stats.hpp"

namespace ivkit {

namespace {

constexpr double kLogVarianceBound = 27.631021115928547;  // log(1e12)

struct FirstStage {
  double intercept = 0.0;
  Vec gamma;
  Vec residual;
};

FirstStage exposure_first_stage(const IVDataset& dataset) {
  const Eigen::Index n = dataset.n();
  const Eigen::Index p = dataset.p();
  Mat x(n, p + 1);
  x.col(0).setOnes();
  x.rightCols(p) = dataset.instruments;
  const Eigen::LDLT<Mat> gram(x.transpose() * x);
  const Vec coef = gram.solve(x.transpose() * dataset.exposure);
  FirstStage fs;
  fs.intercept = coef(0);
  fs.gamma = coef.tail(p);
  fs.residual = dataset.exposure - x * coef;
  return fs;
}

/// F test of a regression of `response` on [1, Z].
std::pair<double, double> regression_f(const Vec& response, const Mat& z) {
  const Eigen::Index n = response.size();
  const Eigen::Index p = z.cols();
  Mat x(n, p + 1);
  x.col(0).setOnes();
  x.rightCols(p) = z;
  const Eigen::LDLT<Mat> gram(x.transpose() * x);
  const Vec coef = gram.solve(x.transpose() * response);
  const Vec fitted = x * coef;
  const double mean = response.mean();
  const double tss = (response.array() - mean).square().sum();
  const double rss = (response - fitted).squaredNorm();
  const double df2 = static_cast<double>(n - p - 1);
  if (!(tss > rss) || df2 <= 0.0) return {0.0, 1.0};
  const double f = ((tss - rss) / static_cast<double>(p)) / (rss / df2);
  return {f, stats::f_sf(f, static_cast<double>(p), df2)};
}

}  // namespace

EstimateReport genius(const IVDataset& dataset, const GeniusOptions& options) {
  const Eigen::Index n = dataset.n();
  const Eigen::Index p = dataset.p();
  const double nd = static_cast<double>(n);
  const FirstStage fs = exposure_first_stage(dataset);

  const Vec z_means = dataset.instruments.colwise().mean();
  const Mat zc = dataset.instruments.rowwise() - z_means.transpose();

  // averaged interaction moments a - beta b
  Vec a_vec = Vec::Zero(p);
  Vec b_vec = Vec::Zero(p);
  double scale2 = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double e = fs.residual(i);
    a_vec += zc.row(i).transpose() * (e * dataset.outcome(i));
    b_vec += zc.row(i).transpose() * (e * dataset.exposure(i));
    scale2 += zc.row(i).squaredNorm() * e * e * dataset.exposure(i) *
              dataset.exposure(i);
  }
  a_vec /= nd;
  b_vec /= nd;
  scale2 /= nd;
  if (b_vec.norm() < 1e-10 * std::sqrt(std::max(scale2, 1e-300))) {
    throw HomoskedasticExposure(
        "interaction instruments carry no exposure signal");
  }

  double beta;
  if (options.variant == GeniusVariant::gmm_mean) {
    beta = a_vec.dot(b_vec) / b_vec.squaredNorm();
  } else {
    double num = 0.0;
    double den = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double w = zc.row(i).squaredNorm() * fs.residual(i) * fs.residual(i);
      num += w * dataset.outcome(i) * dataset.exposure(i);
      den += w * dataset.exposure(i) * dataset.exposure(i);
    }
    beta = num / den;
  }

  // stacked-moment sandwich: first-stage normal equations plus the scalar
  // estimating equation of the chosen variant
  const Eigen::Index q = p + 2;  // (intercept, gamma, beta)
  Mat a_mat = Mat::Zero(q, q);
  Mat b_mat = Mat::Zero(q, q);
  Vec x_row(p + 1);
  Vec psi_grad(q);
  for (Eigen::Index i = 0; i < n; ++i) {
    x_row(0) = 1.0;
    x_row.tail(p) = dataset.instruments.row(i).transpose();
    const double e = fs.residual(i);
    const double r = dataset.outcome(i) - beta * dataset.exposure(i);
    const double d_i = dataset.exposure(i);
    const Vec zci = zc.row(i).transpose();

    double psi;
    double dpsi_de;  // d psi / d e  (chain through e = D - a - Z gamma)
    double dpsi_dbeta;
    if (options.variant == GeniusVariant::gmm_mean) {
      const double bz = b_vec.dot(zci);
      psi = bz * e * r;
      dpsi_de = bz * r;
      dpsi_dbeta = -bz * e * d_i;
    } else {
      const double c = zci.squaredNorm();
      psi = c * e * e * r * d_i;
      dpsi_de = 2.0 * c * e * r * d_i;
      dpsi_dbeta = -c * e * e * d_i * d_i;
    }

    // moment vector (m1; psi) and Jacobian accumulation
    b_mat.topLeftCorner(p + 1, p + 1) += (x_row * x_row.transpose()) * (e * e);
    b_mat.topRightCorner(p + 1, 1) += x_row * (e * psi);
    b_mat(q - 1, q - 1) += psi * psi;

    a_mat.topLeftCorner(p + 1, p + 1) -= x_row * x_row.transpose();
    // d psi / d (a, gamma) = dpsi_de * (-x_row)
    a_mat.bottomLeftCorner(1, p + 1) -= (dpsi_de * x_row).transpose();
    a_mat(q - 1, q - 1) += dpsi_dbeta;
  }
  b_mat.bottomLeftCorner(1, p + 1) = b_mat.topRightCorner(p + 1, 1).transpose();
  a_mat /= nd;
  b_mat /= nd;

  EstimateReport report;
  report.method = options.variant == GeniusVariant::gmm_mean ? "genius"
                                                             : "genius_sumsq";
  report.beta_hat = beta;
  const Eigen::FullPivLU<Mat> a_lu(a_mat);
  if (a_lu.isInvertible()) {
    const Mat a_inv = a_lu.inverse();
    const Mat var = a_inv * b_mat * a_inv.transpose() / nd;
    report.se = std::sqrt(std::max(var(q - 1, q - 1), 0.0));
    report.ci = wald_interval(beta, *report.se, options.alpha);
  } else {
    report.warnings.push_back("SingularSandwich");
  }

  const auto [het_f, het_p] =
      regression_f(fs.residual.array().square(), dataset.instruments);
  report.diagnostics["het_score_f"] = het_f;
  report.diagnostics["het_score_p"] = het_p;
  report.diagnostics["moment_scale"] = b_vec.norm();
  if (het_p > 0.05) report.warnings.push_back("Homoskedastic");
  return report;
}

Vec MisteriParams::pack() const {
  Vec theta(dim());
  theta(0) = beta0;
  theta(1) = beta;
  theta.segment(2, p()) = pi;
  theta(p() + 2) = alpha;
  theta(p() + 3) = eta0;
  theta.tail(p()) = eta;
  return theta;
}

MisteriParams MisteriParams::unpack(const Vec& theta, Eigen::Index p) {
  MisteriParams params;
  params.beta0 = theta(0);
  params.beta = theta(1);
  params.pi = theta.segment(2, p);
  params.alpha = theta(p + 2);
  params.eta0 = theta(p + 3);
  params.eta = theta.tail(p);
  return params;
}

std::pair<double, Vec> misteri_loglik(const MisteriParams& params,
                                      const IVDataset& dataset) {
  const Eigen::Index n = dataset.n();
  const Eigen::Index p = dataset.p();
  if (params.pi.size() != p || params.eta.size() != p) {
    throw DimensionMismatch("parameter vectors disagree with instrument count");
  }
  const Vec s = Vec::Constant(n, params.eta0) + dataset.instruments * params.eta;
  if (s.cwiseAbs().maxCoeff() > kLogVarianceBound) {
    throw NumericalOverflow("log-variance outside [log 1e-12, log 1e12]");
  }
  const Vec v = s.array().exp();
  const Vec mu = Vec::Constant(n, params.beta0) +
                 params.beta * dataset.exposure +
                 dataset.instruments * params.pi +
                 params.alpha * dataset.exposure.cwiseProduct(v);
  const Vec r = dataset.outcome - mu;

  constexpr double kHalfLog2Pi = 0.9189385332046727;
  const double value = -static_cast<double>(n) * kHalfLog2Pi - 0.5 * s.sum() -
                       0.5 * (r.array().square() / v.array()).sum();

  Vec grad(2 * p + 4);
  const Vec r_over_v = r.cwiseQuotient(v);
  grad(0) = r_over_v.sum();
  grad(1) = r_over_v.dot(dataset.exposure);
  grad.segment(2, p) = dataset.instruments.transpose() * r_over_v;
  grad(p + 2) = r.dot(dataset.exposure);
  const Vec t = (-0.5 + params.alpha * dataset.exposure.array() * r.array() +
                 0.5 * r.array().square() / v.array())
                    .matrix();
  grad(p + 3) = t.sum();
  grad.tail(p) = dataset.instruments.transpose() * t;
  return {value, grad};
}

namespace {

MisteriParams misteri_initial(const IVDataset& dataset) {
  const Eigen::Index n = dataset.n();
  const Eigen::Index p = dataset.p();
  Mat x(n, p + 2);
  x.col(0).setOnes();
  x.col(1) = dataset.exposure;
  x.rightCols(p) = dataset.instruments;
  const Eigen::LDLT<Mat> gram(x.transpose() * x);
  const Vec coef = gram.solve(x.transpose() * dataset.outcome);
  const Vec resid = dataset.outcome - x * coef;

  Mat xz(n, p + 1);
  xz.col(0).setOnes();
  xz.rightCols(p) = dataset.instruments;
  const Vec log_sq = (resid.array().square() + 1e-10).log();
  const Eigen::LDLT<Mat> gram_z(xz.transpose() * xz);
  const Vec vc = gram_z.solve(xz.transpose() * log_sq);

  MisteriParams params;
  params.beta0 = coef(0);
  params.beta = coef(1);
  params.pi = coef.tail(p);
  params.alpha = 0.0;
  params.eta0 = vc(0);
  params.eta = vc.tail(p);
  return params;
}

}  // namespace

MisteriFit misteri_fit_full(const IVDataset& dataset,
                            const MisteriOptions& options) {
  const Eigen::Index n = dataset.n();
  const Eigen::Index p = dataset.p();
  if (p < 1) throw DimensionMismatch("need at least one instrument");
  if (n < 10 * (2 * p + 4)) {
    throw DimensionMismatch("need n >= 10(2p + 4) observations");
  }
  const double nd = static_cast<double>(n);

  const ObjectiveFn objective = [&](const Vec& theta, Vec& grad) -> double {
    try {
      const auto [value, g] = misteri_loglik(MisteriParams::unpack(theta, p), dataset);
      grad = -g / nd;
      return -value / nd;
    } catch (const NumericalOverflow&) {
      grad.setZero(theta.size());
      return std::numeric_limits<double>::infinity();
    }
  };

  const MisteriParams base = misteri_initial(dataset);
  Vec base_theta = base.pack();
  // shrink the variance slopes until the start is evaluable
  for (int tries = 0; tries < 40; ++tries) {
    Vec g;
    if (std::isfinite(objective(base_theta, g))) break;
    base_theta(p + 3) *= 0.5;
    base_theta.tail(p) *= 0.5;
  }

  BfgsOptions bopt;
  bopt.max_iterations = options.max_iterations;
  bopt.gradient_tolerance = 1e-8;

  std::optional<BfgsResult> best;
  for (int s = 0; s < options.starts; ++s) {
    Vec theta0 = base_theta;
    if (s > 0) {
      Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(s)));
      for (Eigen::Index j = 0; j < theta0.size(); ++j) {
        theta0(j) += 0.25 * std::max(0.5, std::abs(theta0(j))) * rng.normal();
      }
    }
    try {
      BfgsResult run = minimize_bfgs(objective, theta0, bopt);
      if (!best || run.value < best->value) best = std::move(run);
    } catch (const OptimizerDiverged&) {
      // unlucky start; other starts may still work
    }
  }
  if (!best) throw OptimizerDiverged("no start point was evaluable");

  MisteriFit fit;
  fit.params = MisteriParams::unpack(best->x, p);
  fit.loglik = -best->value * nd;
  if (!best->converged) fit.warnings.push_back("OptimizerNotConverged");

  // observed information by central differences of the analytic gradient
  const Eigen::Index dim = best->x.size();
  Mat hessian(dim, dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    const double h = 1e-5 * std::max(1.0, std::abs(best->x(j)));
    Vec plus = best->x;
    Vec minus = best->x;
    plus(j) += h;
    minus(j) -= h;
    const auto [vp, gp] = misteri_loglik(MisteriParams::unpack(plus, p), dataset);
    const auto [vm, gm] = misteri_loglik(MisteriParams::unpack(minus, p), dataset);
    (void)vp;
    (void)vm;
    hessian.col(j) = (gp - gm) / (2.0 * h);
  }
  fit.information = -0.5 * (hessian + hessian.transpose());

  Eigen::SelfAdjointEigenSolver<Mat> eig(fit.information);
  const double max_eval = eig.eigenvalues().maxCoeff();
  fit.se = Vec::Constant(dim, std::numeric_limits<double>::quiet_NaN());
  if (eig.eigenvalues().minCoeff() <= 0.0) {
    fit.warnings.push_back("InformationNotPositiveDefinite");
  }
  Vec inv_evals = Vec::Zero(dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    if (eig.eigenvalues()(j) > 1e-12 * std::max(max_eval, 1.0)) {
      inv_evals(j) = 1.0 / eig.eigenvalues()(j);
    }
  }
  const Mat cov =
      eig.eigenvectors() * inv_evals.asDiagonal() * eig.eigenvectors().transpose();
  for (Eigen::Index j = 0; j < dim; ++j) {
    fit.se(j) = std::sqrt(std::max(cov(j, j), 0.0));
  }

  // joint significance of the log-variance slopes
  double max_t = 0.0;
  for (Eigen::Index j = 0; j < p; ++j) {
    const double se = fit.se(p + 4 + j);
    if (se > 0.0 && std::isfinite(se)) {
      max_t = std::max(max_t, std::abs(fit.params.eta(j)) / se);
    }
  }
  if (max_t < 2.0) fit.warnings.push_back("IdentificationWeak");
  return fit;
}

EstimateReport misteri_fit(const IVDataset& dataset,
                           const MisteriOptions& options) {
  const MisteriFit fit = misteri_fit_full(dataset, options);
  EstimateReport report;
  report.method = "misteri";
  report.beta_hat = fit.params.beta;
  const double se_beta = fit.se(1);
  if (std::isfinite(se_beta) && se_beta > 0.0) {
    report.se = se_beta;
    report.ci = wald_interval(fit.params.beta, se_beta, options.alpha);
  }
  report.warnings = fit.warnings;
  report.diagnostics["loglik"] = fit.loglik;
  report.diagnostics["alpha_confounding"] = fit.params.alpha;
  report.diagnostics["beta0"] = fit.params.beta0;
  report.diagnostics["eta0"] = fit.params.eta0;
  for (Eigen::Index j = 0; j < fit.params.p(); ++j) {
    report.diagnostics["eta_" + std::to_string(j + 1)] = fit.params.eta(j);
    report.diagnostics["pi_" + std::to_string(j + 1)] = fit.params.pi(j);
  }
  return report;
}

}  // namespace ivkit
