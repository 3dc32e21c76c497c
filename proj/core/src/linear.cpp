#include "ivkit/linear.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <Eigen/Eigenvalues>

#include "ivkit/errors.hpp"
#include "ivkit/rng.hpp"
#include "ivkit/selection.hpp"
#include "ivkit/stats.hpp"

namespace ivkit {

namespace {

std::vector<int> complement_of(const std::vector<int>& valid_set, Eigen::Index p) {
  std::set<int> v(valid_set.begin(), valid_set.end());
  std::vector<int> out;
  for (int j = 0; j < p; ++j) {
    if (!v.count(j)) out.push_back(j);
  }
  return out;
}

void check_valid_set(const std::vector<int>& valid_set, Eigen::Index p) {
  if (valid_set.empty()) throw EmptyValidSet("valid set must be nonempty");
  std::set<int> seen;
  for (int j : valid_set) {
    if (j < 0 || j >= p) {
      throw InvalidArgument("instrument index " + std::to_string(j) +
                            " out of range");
    }
    if (!seen.insert(j).second) {
      throw InvalidArgument("duplicate instrument index in valid set");
    }
  }
}

void require_centered(const IVDataset& dataset, const char* who) {
  if (!dataset.centered) {
    throw InvalidArgument(std::string(who) + " requires a centered dataset");
  }
}

void check_conditioning(const Mat& gram, const char* what) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(gram, Eigen::EigenvaluesOnly);
  const double lmax = eig.eigenvalues().maxCoeff();
  const double lmin = eig.eigenvalues().minCoeff();
  if (!(lmax > 0.0) || lmin <= 0.0 ||
      std::sqrt(lmin / lmax) <= kRankTolerance) {
    throw RankDeficient(what);
  }
}

}  // namespace

TslsSolution tsls_solve(const CrossProducts& cp, const std::vector<int>& valid_set) {
  const Eigen::Index p = cp.p();
  check_valid_set(valid_set, p);
  const std::vector<int> controls = complement_of(valid_set, p);
  const Eigen::Index m = 1 + static_cast<Eigen::Index>(controls.size());

  const Eigen::LDLT<Mat> ztz(cp.ztz);
  const Vec gamma_hat = ztz.solve(cp.ztd);
  const double h2 = gamma_hat.dot(cp.ztd);  // ||P_Z D||^2
  const double hty = gamma_hat.dot(cp.zty);

  // Gram of W = [P_Z D, Z_controls]; note W'X = W'W for X = [D, Z_controls].
  Mat wtw(m, m);
  Vec wty(m);
  wtw(0, 0) = h2;
  wty(0) = hty;
  for (Eigen::Index a = 0; a < m - 1; ++a) {
    const int ja = controls[static_cast<std::size_t>(a)];
    wtw(0, a + 1) = cp.ztd(ja);
    wtw(a + 1, 0) = cp.ztd(ja);
    wty(a + 1) = cp.zty(ja);
    for (Eigen::Index b = 0; b < m - 1; ++b) {
      wtw(a + 1, b + 1) = cp.ztz(ja, controls[static_cast<std::size_t>(b)]);
    }
  }
  check_conditioning(wtw, "projected exposure and control instruments are collinear");

  const Eigen::LDLT<Mat> wtw_ldlt(wtw);
  const Vec theta = wtw_ldlt.solve(wty);

  TslsSolution sol;
  sol.beta = theta(0);
  sol.control_coefs = theta.tail(m - 1);
  sol.controls = controls;
  sol.wtw_inv = wtw_ldlt.solve(Mat::Identity(m, m));

  // u'u for u = Y - D beta - Z_c psi, from cross products.
  double rss = cp.yty - 2.0 * sol.beta * cp.ytd + sol.beta * sol.beta * cp.dtd;
  for (Eigen::Index a = 0; a < m - 1; ++a) {
    const int ja = controls[static_cast<std::size_t>(a)];
    const double psi_a = sol.control_coefs(a);
    rss += -2.0 * psi_a * cp.zty(ja) + 2.0 * sol.beta * psi_a * cp.ztd(ja);
    for (Eigen::Index b = 0; b < m - 1; ++b) {
      rss += psi_a * sol.control_coefs(b) *
             cp.ztz(ja, controls[static_cast<std::size_t>(b)]);
    }
  }
  sol.rss = std::max(rss, 0.0);
  sol.sigma2 = sol.rss / static_cast<double>(cp.n);
  return sol;
}

namespace {

/// Structural residual vector for a TSLS solution.
Vec tsls_residual(const IVDataset& ds, const TslsSolution& sol) {
  Vec u = ds.outcome - sol.beta * ds.exposure;
  for (std::size_t a = 0; a < sol.controls.size(); ++a) {
    u -= sol.control_coefs(static_cast<Eigen::Index>(a)) *
         ds.instruments.col(sol.controls[a]);
  }
  return u;
}

double tsls_beta_var(const IVDataset& ds, const TslsSolution& sol,
                     const Vec& gamma_hat, CovMode cov_mode) {
  if (cov_mode == CovMode::homoskedastic) {
    return sol.sigma2 * sol.wtw_inv(0, 0);
  }
  const Eigen::Index m = 1 + static_cast<Eigen::Index>(sol.controls.size());
  const Vec u = tsls_residual(ds, sol);
  const Vec h = ds.instruments * gamma_hat;
  Mat w(ds.n(), m);
  w.col(0) = h;
  for (std::size_t a = 0; a < sol.controls.size(); ++a) {
    w.col(static_cast<Eigen::Index>(a) + 1) = ds.instruments.col(sol.controls[a]);
  }
  const Mat wu = w.array().colwise() * u.array();
  const Mat meat = wu.transpose() * wu;
  const Mat var = sol.wtw_inv * meat * sol.wtw_inv;
  return var(0, 0);
}

}  // namespace

EstimateReport tsls(const IVDataset& dataset, const std::vector<int>& valid_set,
                    double alpha, CovMode cov_mode) {
  require_centered(dataset, "tsls");
  const CrossProducts cp = CrossProducts::from(dataset);
  const TslsSolution sol = tsls_solve(cp, valid_set);
  const Vec gamma_hat = Eigen::LDLT<Mat>(cp.ztz).solve(cp.ztd);

  EstimateReport report;
  report.method = "tsls";
  report.beta_hat = sol.beta;
  const double var = tsls_beta_var(dataset, sol, gamma_hat, cov_mode);
  report.se = std::sqrt(std::max(var, 0.0));
  report.ci = wald_interval(sol.beta, *report.se, alpha);
  report.valid_set = valid_set;
  std::sort(report.valid_set->begin(), report.valid_set->end());
  report.diagnostics["n_controls"] = static_cast<double>(sol.controls.size());
  report.diagnostics["rss"] = sol.rss;
  return report;
}

EstimateReport ols_estimator(const IVDataset& dataset, double alpha,
                             CovMode cov_mode) {
  require_centered(dataset, "ols_estimator");
  const double dtd = dataset.exposure.squaredNorm();
  if (dtd <= 0.0) throw RankDeficient("exposure is identically zero");
  const double beta = dataset.exposure.dot(dataset.outcome) / dtd;
  const Vec u = dataset.outcome - beta * dataset.exposure;
  double var;
  if (cov_mode == CovMode::homoskedastic) {
    var = (u.squaredNorm() / static_cast<double>(dataset.n())) / dtd;
  } else {
    var = (dataset.exposure.array().square() * u.array().square()).sum() /
          (dtd * dtd);
  }
  EstimateReport report;
  report.method = "ols";
  report.beta_hat = beta;
  report.se = std::sqrt(var);
  report.ci = wald_interval(beta, *report.se, alpha);
  return report;
}

EstimateReport median_estimator(const ReducedFormFit& fit) {
  fit.require_nonzero_first_stage();
  const Eigen::Index p = fit.p();
  std::vector<double> ratios(static_cast<std::size_t>(p));
  for (Eigen::Index j = 0; j < p; ++j) ratios[static_cast<std::size_t>(j)] = fit.ratio(j);
  std::sort(ratios.begin(), ratios.end());
  const std::size_t mid = ratios.size() / 2;
  const double med = (ratios.size() % 2 == 1)
                         ? ratios[mid]
                         : 0.5 * (ratios[mid - 1] + ratios[mid]);
  EstimateReport report;
  report.method = "median";
  report.beta_hat = med;
  report.diagnostics["p"] = static_cast<double>(p);
  return report;
}

double kclass_point_with_k(const CrossProducts& cp, double k) {
  const Eigen::LDLT<Mat> ztz(cp.ztz);
  const Vec gamma_hat = ztz.solve(cp.ztd);
  const double dpzd = gamma_hat.dot(cp.ztd);
  const double dpzy = gamma_hat.dot(cp.zty);
  const double num = (1.0 - k) * cp.ytd + k * dpzy;
  const double den = (1.0 - k) * cp.dtd + k * dpzd;
  return num / den;
}

EstimateReport kclass_estimator(const IVDataset& dataset, double alpha) {
  require_centered(dataset, "kclass_estimator");
  const double n = static_cast<double>(dataset.n());
  const double p = static_cast<double>(dataset.p());
  if (dataset.n() - dataset.p() - 1 <= 0) {  // 1 - p/n - 1/n <= 0, exactly
    throw DegenerateK("k denominator 1 - p/n - 1/n is non-positive");
  }
  const double k = (1.0 - 1.0 / n) / (1.0 - p / n - 1.0 / n);
  const CrossProducts cp = CrossProducts::from(dataset);
  const Eigen::LDLT<Mat> ztz(cp.ztz);
  const Vec gamma_hat = ztz.solve(cp.ztd);
  const double dpzd = gamma_hat.dot(cp.ztd);
  const double den = (1.0 - k) * cp.dtd + k * dpzd;
  if (std::abs(den) < 1e-12) {
    throw DegenerateK("k-class denominator is numerically zero");
  }
  const double beta = kclass_point_with_k(cp, k);

  EstimateReport report;
  report.method = "kclass";
  report.beta_hat = beta;
  const double sigma2 =
      std::max(cp.yty - 2.0 * beta * cp.ytd + beta * beta * cp.dtd, 0.0) / n;
  report.se = std::sqrt(sigma2 / std::abs(den));
  report.ci = wald_interval(beta, *report.se, alpha);
  report.diagnostics["k"] = k;
  return report;
}

Vec lasso_coordinate_descent(const Mat& s, const Vec& c, const Vec& weights,
                             double lambda, Vec warm_start) {
  const Eigen::Index p = c.size();
  Vec pi = std::move(warm_start);
  if (pi.size() != p) pi = Vec::Zero(p);
  constexpr int kMaxSweeps = 10000;
  constexpr double kTol = 1e-9;
  Vec sp = s * pi;  // running S * pi
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      const double sjj = s(j, j);
      if (sjj <= 0.0) continue;
      const double rho = c(j) - sp(j) + sjj * pi(j);
      const double thr = lambda * weights(j);
      double next = 0.0;
      if (rho > thr) {
        next = (rho - thr) / sjj;
      } else if (rho < -thr) {
        next = (rho + thr) / sjj;
      }
      const double delta = next - pi(j);
      if (delta != 0.0) {
        sp += delta * s.col(j);
        pi(j) = next;
        max_change = std::max(max_change, std::abs(delta));
      }
    }
    if (max_change < kTol) break;
  }
  return pi;
}

namespace {

/// Covariance-form first-step problem for the penalized estimators:
/// design (P_Z - P_{P_Z D}) Z with response (P_Z - P_{P_Z D}) Y.
struct PenalizedProblem {
  Mat s;          // design Gram
  Vec c;          // design' response
  double h2;      // ||P_Z D||^2
  double hty;     // (P_Z D)' Y
  Vec ztd;        // Z'D (the plug-in needs (P_Z D)'Z = (Z'D)')
  Vec gamma_hat;
  Vec Gamma_hat;
};

PenalizedProblem penalized_problem(const CrossProducts& cp) {
  PenalizedProblem pr;
  const Eigen::LDLT<Mat> ztz(cp.ztz);
  pr.gamma_hat = ztz.solve(cp.ztd);
  pr.Gamma_hat = ztz.solve(cp.zty);
  pr.h2 = pr.gamma_hat.dot(cp.ztd);
  if (pr.h2 <= 1e-12 * std::max(1.0, cp.dtd)) {
    throw RankDeficient("projected exposure is numerically zero");
  }
  pr.hty = pr.gamma_hat.dot(cp.zty);
  pr.ztd = cp.ztd;
  pr.s = cp.ztz - (cp.ztd * cp.ztd.transpose()) / pr.h2;
  pr.c = cp.zty - cp.ztd * (pr.hty / pr.h2);
  return pr;
}

double plugin_beta(const PenalizedProblem& pr, const Vec& pi) {
  return (pr.hty - pr.ztd.dot(pi)) / pr.h2;
}

Vec make_lambda_grid(double lambda_max, int size) {
  // multiplicative form keeps the grid exactly proportional to lambda_max
  // (outcome-scaling equivariance holds to the last bit)
  Vec grid(size);
  for (int i = 0; i < size; ++i) {
    const double t = (size == 1) ? 0.0 : static_cast<double>(i) / (size - 1);
    grid(i) = lambda_max * std::pow(1e-3, t);
  }
  return grid;
}

LassoPath run_path(const PenalizedProblem& pr, const Vec& weights, int path_size) {
  const Eigen::Index p = pr.c.size();
  double lambda_max = 0.0;
  for (Eigen::Index j = 0; j < p; ++j) {
    lambda_max = std::max(lambda_max, std::abs(pr.c(j)) / weights(j));
  }
  if (lambda_max <= 0.0) lambda_max = 1.0;
  LassoPath path;
  path.lambdas = make_lambda_grid(lambda_max, path_size);
  path.pi_hats = Mat::Zero(p, path_size);
  path.beta_hats = Vec::Zero(path_size);
  Vec warm = Vec::Zero(p);
  for (int i = 0; i < path_size; ++i) {
    warm = lasso_coordinate_descent(pr.s, pr.c, weights, path.lambdas(i), warm);
    path.pi_hats.col(i) = warm;
    path.beta_hats(i) = plugin_beta(pr, warm);
  }
  return path;
}

}  // namespace

LassoPath sisvive_path(const IVDataset& dataset, int path_size) {
  require_centered(dataset, "sisvive_path");
  const CrossProducts cp = CrossProducts::from(dataset);
  const PenalizedProblem pr = penalized_problem(cp);
  return run_path(pr, Vec::Ones(cp.p()), path_size);
}

EstimateReport sisvive(const IVDataset& dataset, const SisviveOptions& options) {
  require_centered(dataset, "sisvive");
  if (options.lambda && !(*options.lambda > 0.0)) {
    throw NonPositiveLambda("sisvive lambda must be positive");
  }
  const CrossProducts cp = CrossProducts::from(dataset);
  const PenalizedProblem pr = penalized_problem(cp);
  const Eigen::Index p = cp.p();
  const Vec ones = Vec::Ones(p);

  double chosen_lambda;
  double cv_objective = std::numeric_limits<double>::quiet_NaN();
  if (options.lambda) {
    chosen_lambda = *options.lambda;
  } else {
    // Materialize the transformed design once; fold Grams follow from row
    // subsets of it.
    const Eigen::Index n = dataset.n();
    const Vec h = dataset.instruments * pr.gamma_hat;
    const Vec cd = pr.ztd / pr.h2;
    Mat xt = dataset.instruments - h * cd.transpose();
    Vec yt = dataset.instruments * pr.Gamma_hat - h * (pr.hty / pr.h2);

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(options.seed);
    rng.shuffle(order);
    const int folds = std::max(2, options.cv_folds);

    std::vector<Mat> s_fold(folds, Mat::Zero(p, p));
    std::vector<Vec> c_fold(folds, Vec::Zero(p));
    std::vector<double> y2_fold(folds, 0.0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int f = static_cast<int>(order[static_cast<std::size_t>(i)] % folds);
      const Vec row = xt.row(i).transpose();
      s_fold[f].noalias() += row * row.transpose();
      c_fold[f].noalias() += row * yt(i);
      y2_fold[f] += yt(i) * yt(i);
    }
    Mat s_total = Mat::Zero(p, p);
    Vec c_total = Vec::Zero(p);
    for (int f = 0; f < folds; ++f) {
      s_total += s_fold[f];
      c_total += c_fold[f];
    }

    double lambda_max = c_total.cwiseAbs().maxCoeff();
    if (lambda_max <= 0.0) lambda_max = 1.0;
    const Vec grid = make_lambda_grid(lambda_max, options.path_size);

    Mat fold_err(folds, options.path_size);
    for (int f = 0; f < folds; ++f) {
      const Mat s_train = s_total - s_fold[f];
      const Vec c_train = c_total - c_fold[f];
      Vec warm = Vec::Zero(p);
      for (int i = 0; i < options.path_size; ++i) {
        warm = lasso_coordinate_descent(s_train, c_train, ones, grid(i), warm);
        fold_err(f, i) = y2_fold[f] - 2.0 * warm.dot(c_fold[f]) +
                         warm.dot(s_fold[f] * warm);
      }
    }
    // one-standard-error rule: largest lambda within one fold-se of the
    // minimum mean error (the plain minimum systematically overselects)
    const Vec mean_err = fold_err.colwise().mean();
    int best = 0;
    mean_err.minCoeff(&best);
    const Vec dev = fold_err.row(best).transpose().array() - mean_err(best);
    const double se = std::sqrt(dev.squaredNorm() /
                                (static_cast<double>(folds - 1) *
                                 static_cast<double>(folds)));
    int chosen = best;
    for (int i = 0; i < options.path_size; ++i) {
      if (mean_err(i) <= mean_err(best) + se) {
        chosen = i;  // grid is descending; first hit is the largest lambda
        break;
      }
    }
    chosen_lambda = grid(chosen);
    cv_objective = mean_err(chosen) / static_cast<double>(n);
  }

  const Vec pi = lasso_coordinate_descent(pr.s, pr.c, ones, chosen_lambda,
                                          Vec::Zero(p));
  EstimateReport report;
  report.method = "sisvive";
  report.beta_hat = plugin_beta(pr, pi);
  std::vector<int> valid;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (pi(j) == 0.0) valid.push_back(static_cast<int>(j));
  }
  report.valid_set = valid;
  report.diagnostics["lambda"] = chosen_lambda;
  if (!std::isnan(cv_objective)) report.diagnostics["cv_objective"] = cv_objective;
  report.diagnostics["n_selected_invalid"] = static_cast<double>(p) -
                                             static_cast<double>(valid.size());
  return report;
}

EstimateReport adaptive_lasso(const IVDataset& dataset,
                              const AdaptiveLassoOptions& options) {
  require_centered(dataset, "adaptive_lasso");
  const CrossProducts cp = CrossProducts::from(dataset);
  const PenalizedProblem pr = penalized_problem(cp);
  const Eigen::Index p = cp.p();

  const ReducedFormFit fit = fit_reduced_form(dataset, options.cov_mode);
  const EstimateReport med = median_estimator(fit);
  const Vec pi_med = fit.Gamma_hat - fit.gamma_hat * med.beta_hat;

  constexpr double kWeightCap = 1e12;
  Vec weights(p);
  bool degenerate_initializer = false;
  for (Eigen::Index j = 0; j < p; ++j) {
    const double a = std::abs(pi_med(j));
    if (a <= 1.0 / kWeightCap) {
      weights(j) = kWeightCap;
      degenerate_initializer = true;
    } else {
      weights(j) = 1.0 / a;
    }
  }

  const LassoPath path = run_path(pr, weights, options.path_size);

  // Candidate valid sets along the path, largest first, deduplicated.
  std::vector<std::vector<int>> candidates;
  for (int i = 0; i < path.lambdas.size(); ++i) {
    std::vector<int> v;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (path.pi_hats(j, i) == 0.0) v.push_back(static_cast<int>(j));
    }
    if (v.empty()) continue;
    if (std::find(candidates.begin(), candidates.end(), v) == candidates.end()) {
      candidates.push_back(std::move(v));
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const auto& a, const auto& b) { return a.size() > b.size(); });

  const double n = static_cast<double>(dataset.n());
  const double level = options.level ? *options.level : 0.1 / std::log(n);
  const DownwardTestingResult choice =
      downward_testing(candidates, dataset, level, options.cov_mode);

  EstimateReport report = tsls(dataset, choice.set, options.alpha, options.cov_mode);
  report.method = "adaptive_lasso";
  report.diagnostics["downward_level"] = level;
  report.diagnostics["downward_p_value"] = choice.p_value;
  report.diagnostics["n_candidates"] = static_cast<double>(candidates.size());
  // Largest lambda on the path whose zero set equals the selection.
  for (int i = 0; i < path.lambdas.size(); ++i) {
    std::vector<int> v;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (path.pi_hats(j, i) == 0.0) v.push_back(static_cast<int>(j));
    }
    if (v == choice.set) {
      report.diagnostics["lambda"] = path.lambdas(i);
      break;
    }
  }
  if (choice.all_rejected) report.warnings.push_back("AllCandidatesRejected");
  if (degenerate_initializer) report.warnings.push_back("InitializerDegenerate");
  return report;
}

EstimateReport summary_iv_estimate(const ReducedFormFit& fit,
                                   const std::vector<int>& valid_set,
                                   double alpha) {
  check_valid_set(valid_set, fit.p());
  fit.require_nonzero_first_stage();
  double a = 0.0;
  double b = 0.0;
  for (int j : valid_set) {
    const double w = 1.0 / fit.cov_GG(j, j);
    a += w * fit.gamma_hat(j) * fit.Gamma_hat(j);
    b += w * fit.gamma_hat(j) * fit.gamma_hat(j);
  }
  if (b <= 0.0) throw ZeroFirstStage("all first-stage coefficients vanish");
  const double beta = a / b;

  // Delta method over the stacked coordinates of the valid set.
  const Eigen::Index p = fit.p();
  Vec grad = Vec::Zero(2 * p);
  for (int j : valid_set) {
    const double w = 1.0 / fit.cov_GG(j, j);
    grad(j) = w * fit.gamma_hat(j) / b;
    grad(p + j) = w * (fit.Gamma_hat(j) - 2.0 * beta * fit.gamma_hat(j)) / b;
  }
  const double var = grad.dot(fit.cov * grad);

  EstimateReport report;
  report.method = "summary_iv";
  report.beta_hat = beta;
  report.se = std::sqrt(std::max(var, 0.0));
  report.ci = wald_interval(beta, *report.se, alpha);
  report.valid_set = valid_set;
  std::sort(report.valid_set->begin(), report.valid_set->end());
  return report;
}

}  // namespace ivkit
