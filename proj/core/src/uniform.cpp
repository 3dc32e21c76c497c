#include "ivkit/uniform.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "ivkit/errors.hpp"
#include "ivkit/linear.hpp"
#include "ivkit/rng.hpp"
#include "ivkit/selection.hpp"
#include "ivkit/stats.hpp"

namespace ivkit {

std::size_t SearchGrid::validate() const {
  if (!(lower < upper) || !(step > 0.0)) {
    throw InvalidArgument("search grid needs lower < upper and step > 0");
  }
  const double count = (upper - lower) / step;
  if (count > 2e6) {
    throw InvalidArgument("search grid would exceed 2e6 points");
  }
  const auto points = static_cast<std::size_t>(std::floor(count)) + 1;
  if (points < 100) {
    throw GridTooCoarse("search grid has fewer than 100 points");
  }
  return points;
}

SearchGrid default_search_grid(const ReducedFormFit& fit) {
  fit.require_nonzero_first_stage();
  const Eigen::Index p = fit.p();
  double rmin = std::numeric_limits<double>::infinity();
  double rmax = -std::numeric_limits<double>::infinity();
  double se_min = std::numeric_limits<double>::infinity();
  double se_max = 0.0;
  for (Eigen::Index j = 0; j < p; ++j) {
    const double r = fit.ratio(j);
    const double se = fit.ratio_se(j);
    rmin = std::min(rmin, r);
    rmax = std::max(rmax, r);
    se_min = std::min(se_min, se);
    se_max = std::max(se_max, se);
  }
  SearchGrid grid;
  if (se_max <= 0.0) {
    // Degenerate (noise-free) covariance: a narrow symmetric window.
    const double pad = std::max(1e-6, 1e-6 * std::max(std::abs(rmin), std::abs(rmax)));
    grid.lower = rmin - pad;
    grid.upper = rmax + pad;
    grid.step = (grid.upper - grid.lower) / 1000.0;
    return grid;
  }
  grid.lower = rmin - 10.0 * se_max;
  grid.upper = rmax + 10.0 * se_max;
  grid.step = std::max(se_min / 10.0, (grid.upper - grid.lower) / 2e6);
  return grid;
}

int searching_vote_count(const ReducedFormFit& fit, double beta, double alpha,
                         double threshold_scale) {
  const Eigen::Index p = fit.p();
  const double z =
      stats::normal_quantile(1.0 - alpha / (2.0 * static_cast<double>(p)));
  int votes = 0;
  for (Eigen::Index j = 0; j < p; ++j) {
    const double resid = fit.Gamma_hat(j) - beta * fit.gamma_hat(j);
    if (std::abs(resid) <= threshold_scale * z * fit.linear_combo_se(j, beta)) {
      ++votes;
    }
  }
  return votes;
}

namespace {

/// Converts a boolean acceptance profile over the grid into merged
/// intervals with grid-point endpoints.
IntervalUnion accepted_runs_to_union(const std::vector<char>& accepted,
                                     const SearchGrid& grid) {
  std::vector<Interval> pieces;
  const std::size_t n = accepted.size();
  std::size_t i = 0;
  while (i < n) {
    if (!accepted[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < n && accepted[j + 1]) ++j;
    pieces.push_back(Interval{grid.point(i), grid.point(j)});
    i = j + 1;
  }
  return IntervalUnion::from_intervals(std::move(pieces));
}

double binomial_coefficient(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  double c = 1.0;
  for (int i = 1; i <= k; ++i) {
    c *= static_cast<double>(n - k + i) / static_cast<double>(i);
    if (c > 1e18) return c;
  }
  return c;
}

/// Partialled cross products of (Z_V, Y, D) after projecting out the
/// complement columns. All O(p^3) from the full Gram.
struct PartialledSubset {
  Mat k;       // Z~' Z~, v x v
  Vec cy;      // Z~' y~
  Vec cd;      // Z~' d~
  double yy = 0.0;
  double yd = 0.0;
  double dd = 0.0;
};

PartialledSubset partial_out(const CrossProducts& cp,
                             const std::vector<int>& subset) {
  const Eigen::Index p = cp.p();
  std::vector<int> controls;
  std::vector<char> in_subset(static_cast<std::size_t>(p), 0);
  for (int j : subset) in_subset[static_cast<std::size_t>(j)] = 1;
  for (int j = 0; j < p; ++j) {
    if (!in_subset[static_cast<std::size_t>(j)]) controls.push_back(j);
  }
  const auto v = static_cast<Eigen::Index>(subset.size());
  const auto m = static_cast<Eigen::Index>(controls.size());

  PartialledSubset ps;
  ps.k.resize(v, v);
  ps.cy.resize(v);
  ps.cd.resize(v);
  for (Eigen::Index a = 0; a < v; ++a) {
    const int ja = subset[static_cast<std::size_t>(a)];
    ps.cy(a) = cp.zty(ja);
    ps.cd(a) = cp.ztd(ja);
    for (Eigen::Index b = 0; b < v; ++b) {
      ps.k(a, b) = cp.ztz(ja, subset[static_cast<std::size_t>(b)]);
    }
  }
  ps.yy = cp.yty;
  ps.yd = cp.ytd;
  ps.dd = cp.dtd;
  if (m == 0) return ps;

  Mat gcc(m, m);
  Mat gcv(m, v);
  Vec gcy(m);
  Vec gcd(m);
  for (Eigen::Index a = 0; a < m; ++a) {
    const int ja = controls[static_cast<std::size_t>(a)];
    gcy(a) = cp.zty(ja);
    gcd(a) = cp.ztd(ja);
    for (Eigen::Index b = 0; b < m; ++b) {
      gcc(a, b) = cp.ztz(ja, controls[static_cast<std::size_t>(b)]);
    }
    for (Eigen::Index b = 0; b < v; ++b) {
      gcv(a, b) = cp.ztz(ja, subset[static_cast<std::size_t>(b)]);
    }
  }
  const Eigen::LDLT<Mat> gcc_ldlt(gcc);
  const Mat sv = gcc_ldlt.solve(gcv);  // (C'C)^{-1} C'Z_V
  const Vec sy = gcc_ldlt.solve(gcy);
  const Vec sd = gcc_ldlt.solve(gcd);
  ps.k -= gcv.transpose() * sv;
  ps.cy -= sv.transpose() * gcy;
  ps.cd -= sv.transpose() * gcd;
  ps.yy -= gcy.dot(sy);
  ps.yd -= gcy.dot(sd);
  ps.dd -= gcd.dot(sd);
  return ps;
}

}  // namespace

UnionCiResult union_ci(const IVDataset& dataset, int v, double alpha_s,
                       double alpha_t, InnerCiMethod inner,
                       std::optional<SearchGrid> grid, CovMode cov_mode) {
  const int p = static_cast<int>(dataset.p());
  if (v < 1 || v > p) throw InvalidArgument("union_ci needs 1 <= v <= p");
  if (!(alpha_s > 0.0) || !(alpha_t > 0.0) || alpha_s + alpha_t >= 1.0) {
    throw InvalidAlphas("need alpha_s > 0, alpha_t > 0, alpha_s + alpha_t < 1");
  }
  if (binomial_coefficient(p, v) > 1e6) {
    throw CombinatorialLimit("C(p, v) exceeds 1e6 subsets");
  }

  const CrossProducts cp = CrossProducts::from(dataset);
  const double n = static_cast<double>(cp.n);

  SearchGrid inversion_grid;
  std::size_t grid_points = 0;
  std::vector<char> accepted;
  if (inner != InnerCiMethod::wald) {
    inversion_grid = grid ? *grid
                          : default_search_grid(fit_reduced_form(dataset, cov_mode));
    grid_points = inversion_grid.validate();
    accepted.assign(grid_points, 0);
  }

  const double j_cutoff =
      v >= 2 ? stats::chi2_quantile(1.0 - alpha_s, static_cast<double>(v - 1))
             : std::numeric_limits<double>::infinity();

  UnionCiResult result;
  std::vector<Interval> wald_pieces;

  std::vector<int> subset(static_cast<std::size_t>(v));
  for (int i = 0; i < v; ++i) subset[static_cast<std::size_t>(i)] = i;
  while (true) {
    ++result.subsets_total;

    bool survives = true;
    if (v >= 2) {
      const JTestResult jt = j_test(dataset, subset, cov_mode);
      survives = jt.statistic <= j_cutoff;
    }
    if (survives) {
      ++result.subsets_surviving;
      if (inner == InnerCiMethod::wald) {
        const EstimateReport rep = tsls(dataset, subset, alpha_t, cov_mode);
        wald_pieces.push_back(rep.ci->intervals().front());
      } else {
        const PartialledSubset ps = partial_out(cp, subset);
        const Eigen::LDLT<Mat> k_ldlt(ps.k);
        if (inner == InnerCiMethod::anderson_rubin) {
          const double fcut = stats::f_quantile(1.0 - alpha_t,
                                                static_cast<double>(v), n - p);
          const Vec ky = k_ldlt.solve(ps.cy);
          const Vec kd = k_ldlt.solve(ps.cd);
          const double qyy = ps.cy.dot(ky);
          const double qyd = ps.cy.dot(kd);
          const double qdd = ps.cd.dot(kd);
          for (std::size_t i = 0; i < grid_points; ++i) {
            if (accepted[i]) continue;
            const double b = inversion_grid.point(i);
            const double qp = qyy - 2.0 * b * qyd + b * b * qdd;
            const double uu = ps.yy - 2.0 * b * ps.yd + b * b * ps.dd;
            const double denom = std::max(uu - qp, 1e-300);
            const double ar = (qp / v) / (denom / (n - p));
            if (ar <= fcut) accepted[i] = 1;
          }
        } else {
          // Conditional likelihood ratio inversion from the 2x2 projected
          // and total cross products of (y~, d~).
          Mat w2(2, 2);
          const Vec ky = k_ldlt.solve(ps.cy);
          const Vec kd = k_ldlt.solve(ps.cd);
          w2 << ps.cy.dot(ky), ps.cy.dot(kd), ps.cy.dot(kd), ps.cd.dot(kd);
          Mat t2(2, 2);
          t2 << ps.yy, ps.yd, ps.yd, ps.dd;
          const Mat omega = (t2 - w2) / (n - p);
          const Mat omega_inv = omega.inverse();
          for (std::size_t i = 0; i < grid_points; ++i) {
            if (accepted[i]) continue;
            const double b = inversion_grid.point(i);
            Eigen::Vector2d b0(1.0, -b);
            Eigen::Vector2d a0(b, 1.0);
            const double sb = b0.dot(omega * b0);
            const double at = a0.dot(omega_inv * a0);
            if (!(sb > 0.0) || !(at > 0.0)) continue;
            const double qs = b0.dot(w2 * b0) / sb;
            const Eigen::Vector2d oia = omega_inv * a0;
            const double qt = oia.dot(w2 * oia) / at;
            const double qst = b0.dot(w2 * oia) / std::sqrt(sb * at);
            const double disc = std::max(
                (qs + qt) * (qs + qt) - 4.0 * (qs * qt - qst * qst), 0.0);
            const double lr = 0.5 * (qs - qt + std::sqrt(disc));
            if (stats::clr_conditional_sf(lr, qt, v) >= alpha_t) accepted[i] = 1;
          }
        }
      }
    }

    // next combination
    int idx = v - 1;
    while (idx >= 0 && subset[static_cast<std::size_t>(idx)] == p - v + idx) --idx;
    if (idx < 0) break;
    ++subset[static_cast<std::size_t>(idx)];
    for (int j = idx + 1; j < v; ++j) {
      subset[static_cast<std::size_t>(j)] = subset[static_cast<std::size_t>(j - 1)] + 1;
    }
  }

  if (inner == InnerCiMethod::wald) {
    result.set = IntervalUnion::from_intervals(std::move(wald_pieces));
  } else {
    result.set = accepted_runs_to_union(accepted, inversion_grid);
  }
  result.misspecification_flag = (result.subsets_surviving == 0);
  return result;
}

SearchingCiResult searching_ci(const ReducedFormFit& fit, double alpha,
                               std::optional<SearchGrid> grid) {
  fit.require_nonzero_first_stage();
  SearchingCiResult out;
  out.grid = grid ? *grid : default_search_grid(fit);
  const std::size_t points = out.grid.validate();
  const int p = static_cast<int>(fit.p());
  std::vector<char> accepted(points, 0);
  for (std::size_t i = 0; i < points; ++i) {
    const double beta = out.grid.point(i);
    accepted[i] = (2 * searching_vote_count(fit, beta, alpha) > p) ? 1 : 0;
  }
  out.set = accepted_runs_to_union(accepted, out.grid);
  return out;
}

namespace detail {

SamplingCiResult sampling_ci_with_cov(const ReducedFormFit& fit, double alpha,
                                      const SamplingCiOptions& options,
                                      const Mat& resample_cov) {
  fit.require_nonzero_first_stage();
  if (options.m < 100) throw InvalidArgument("sampling_ci needs m >= 100 resamples");

  SamplingCiResult result;
  if (options.lambda_override) {
    result.lambda = *options.lambda_override;
  } else {
    if (!fit.n) {
      throw MissingSampleSize(
          "sampling_ci shrinkage needs the sample count; supply lambda_override");
    }
    const double c_n = options.c_n.value_or(0.5);
    const double n = static_cast<double>(*fit.n);
    result.lambda = c_n * std::pow(std::log(n) / static_cast<double>(options.m),
                                   1.0 / (2.0 * static_cast<double>(fit.p())));
  }

  SearchGrid grid = options.grid ? *options.grid : default_search_grid(fit);
  const std::size_t points = grid.validate();
  const int p = static_cast<int>(fit.p());

  // Factor of the resampling covariance (eigen form tolerates PSD input).
  Eigen::SelfAdjointEigenSolver<Mat> eig(resample_cov);
  const Vec evals = eig.eigenvalues().cwiseMax(0.0);
  const Mat factor = eig.eigenvectors() * evals.cwiseSqrt().asDiagonal();

  // Acceptance bands use the original standard errors throughout.
  const double z =
      stats::normal_quantile(1.0 - alpha / (2.0 * static_cast<double>(p)));

  double min_lower = std::numeric_limits<double>::infinity();
  double max_upper = -std::numeric_limits<double>::infinity();

  ReducedFormFit draw = fit;
  for (int m_idx = 0; m_idx < options.m; ++m_idx) {
    Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(m_idx)));
    Vec g(2 * p);
    for (Eigen::Index j = 0; j < 2 * p; ++j) g(j) = rng.normal();
    const Vec theta = factor * g;
    draw.Gamma_hat = fit.Gamma_hat + theta.head(p);
    draw.gamma_hat = fit.gamma_hat + theta.tail(p);

    double lo = std::numeric_limits<double>::quiet_NaN();
    double hi = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t i = 0; i < points; ++i) {
      const double beta = grid.point(i);
      int votes = 0;
      for (int j = 0; j < p; ++j) {
        const double resid = draw.Gamma_hat(j) - beta * draw.gamma_hat(j);
        if (std::abs(resid) <=
            result.lambda * z * fit.linear_combo_se(j, beta)) {
          ++votes;
        }
      }
      if (2 * votes > p) {
        if (std::isnan(lo)) lo = beta;
        hi = beta;
      }
    }
    if (!std::isnan(lo)) {
      ++result.nonempty_resamples;
      min_lower = std::min(min_lower, lo);
      max_upper = std::max(max_upper, hi);
    }
  }

  if (result.nonempty_resamples == 0) {
    result.set = searching_ci(fit, alpha, grid).set;
    result.fallback = true;
    return result;
  }
  result.set = IntervalUnion::single(min_lower, max_upper);
  return result;
}

}  // namespace detail

SamplingCiResult sampling_ci(const ReducedFormFit& fit, double alpha,
                             const SamplingCiOptions& options) {
  return detail::sampling_ci_with_cov(fit, alpha, options, fit.cov);
}

}  // namespace ivkit
