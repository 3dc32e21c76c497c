#include "ivkit/nonlinear.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <Eigen/QR>

#include "ivkit/errors.hpp"
#include "ivkit/rng.hpp"
#include "ivkit/stats.hpp"

namespace ivkit {

Mat HatOperator::dense() const {
  const Eigen::Index n = size();
  Mat q(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Vec e = Vec::Zero(n);
    e(i) = 1.0;
    q.col(i) = apply(e);
  }
  return q;
}

namespace {

/// Orthogonal projection onto the column space of a basis matrix, stored as
/// the thin orthonormal factor of a rank-revealing QR.
class ProjectionHat final : public HatOperator {
 public:
  explicit ProjectionHat(const Mat& basis) {
    Eigen::ColPivHouseholderQR<Mat> qr(basis);
    qr.setThreshold(1e-10);
    const Eigen::Index rank = qr.rank();
    Mat thin = qr.householderQ() * Mat::Identity(basis.rows(), rank);
    u_ = std::move(thin);
  }

  Eigen::Index size() const override { return u_.rows(); }
  Eigen::Index rank() const { return u_.cols(); }

  Vec apply(const Vec& v) const override { return u_ * (u_.transpose() * v); }
  bool is_projection() const override { return true; }

  Vec leverage() const override { return u_.array().square().rowwise().sum(); }

  std::vector<std::pair<int, double>> column(int i) const override {
    const Vec col = u_ * u_.row(i).transpose();
    std::vector<std::pair<int, double>> out;
    out.reserve(static_cast<std::size_t>(col.size()));
    for (Eigen::Index j = 0; j < col.size(); ++j) {
      out.emplace_back(static_cast<int>(j), col(j));
    }
    return out;
  }

 private:
  Mat u_;
};

struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int leaf_id = -1;
};

struct Tree {
  std::vector<TreeNode> nodes;
  int n_leaves = 0;

  int leaf_of(const Eigen::RowVectorXd& x) const {
    int node = 0;
    while (nodes[static_cast<std::size_t>(node)].leaf_id < 0) {
      const TreeNode& nd = nodes[static_cast<std::size_t>(node)];
      node = (x(nd.feature) <= nd.threshold) ? nd.left : nd.right;
    }
    return nodes[static_cast<std::size_t>(node)].leaf_id;
  }
};

Tree grow_tree(const Mat& z, const Vec& d, const std::vector<int>& rows,
               int min_leaf, int max_depth, int mtry, Rng& rng) {
  Tree tree;
  struct Work {
    std::vector<int> rows;
    int depth;
    int node;
  };
  tree.nodes.push_back({});
  std::vector<Work> stack{{rows, 0, 0}};
  const int p = static_cast<int>(z.cols());

  while (!stack.empty()) {
    Work w = std::move(stack.back());
    stack.pop_back();

    const int n = static_cast<int>(w.rows.size());
    bool make_leaf = (w.depth >= max_depth) || (n < 2 * min_leaf);
    int best_feature = -1;
    double best_threshold = 0.0;
    double best_gain = 0.0;
    if (!make_leaf) {
      double sum = 0.0;
      for (int i : w.rows) sum += d(i);
      std::vector<int> features(static_cast<std::size_t>(p));
      std::iota(features.begin(), features.end(), 0);
      rng.shuffle(features);
      features.resize(static_cast<std::size_t>(std::min(mtry, p)));

      for (int f : features) {
        std::vector<int> order(w.rows);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
          return z(a, f) < z(b, f);
        });
        double left_sum = 0.0;
        for (int i = 0; i + 1 < n; ++i) {
          left_sum += d(order[static_cast<std::size_t>(i)]);
          const int nl = i + 1;
          const int nr = n - nl;
          if (nl < min_leaf || nr < min_leaf) continue;
          const double zl = z(order[static_cast<std::size_t>(i)], f);
          const double zr = z(order[static_cast<std::size_t>(i) + 1], f);
          if (zl == zr) continue;
          const double right_sum = sum - left_sum;
          const double gain = left_sum * left_sum / nl + right_sum * right_sum / nr;
          if (gain > best_gain) {
            best_gain = gain;
            best_feature = f;
            best_threshold = 0.5 * (zl + zr);
          }
        }
      }
      make_leaf = (best_feature < 0);
    }

    if (make_leaf) {
      tree.nodes[static_cast<std::size_t>(w.node)].leaf_id = tree.n_leaves++;
      continue;
    }

    std::vector<int> left_rows;
    std::vector<int> right_rows;
    for (int i : w.rows) {
      (z(i, best_feature) <= best_threshold ? left_rows : right_rows).push_back(i);
    }
    const int left_idx = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});
    const int right_idx = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});
    TreeNode& node = tree.nodes[static_cast<std::size_t>(w.node)];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = left_idx;
    node.right = right_idx;
    stack.push_back({std::move(left_rows), w.depth + 1, left_idx});
    stack.push_back({std::move(right_rows), w.depth + 1, right_idx});
  }
  return tree;
}

/// Symmetric leaf-averaging weights: per tree, each analysis point is
/// smoothed over its leaf-mates; the operator averages over trees.
class ForestHat final : public HatOperator {
 public:
  ForestHat(std::vector<std::vector<int>> leaf_assign,
            std::vector<std::vector<int>> leaf_count, Eigen::Index n)
      : leaf_assign_(std::move(leaf_assign)),
        leaf_count_(std::move(leaf_count)),
        n_(n) {}

  Eigen::Index size() const override { return n_; }
  bool is_projection() const override { return false; }

  Vec apply(const Vec& v) const override {
    Vec out = Vec::Zero(n_);
    const auto trees = leaf_assign_.size();
    for (std::size_t t = 0; t < trees; ++t) {
      const auto& assign = leaf_assign_[t];
      std::vector<double> sums(leaf_count_[t].size(), 0.0);
      for (Eigen::Index i = 0; i < n_; ++i) {
        sums[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])] += v(i);
      }
      for (Eigen::Index i = 0; i < n_; ++i) {
        const auto leaf = static_cast<std::size_t>(assign[static_cast<std::size_t>(i)]);
        out(i) += sums[leaf] / leaf_count_[t][leaf];
      }
    }
    return out / static_cast<double>(trees);
  }

  Vec leverage() const override {
    Vec lev = Vec::Zero(n_);
    const auto trees = leaf_assign_.size();
    for (std::size_t t = 0; t < trees; ++t) {
      const auto& assign = leaf_assign_[t];
      for (Eigen::Index i = 0; i < n_; ++i) {
        lev(i) += 1.0 / leaf_count_[t][static_cast<std::size_t>(
                            assign[static_cast<std::size_t>(i)])];
      }
    }
    return lev / static_cast<double>(trees);
  }

  std::vector<std::pair<int, double>> column(int i) const override {
    std::map<int, double> acc;
    const auto trees = leaf_assign_.size();
    for (std::size_t t = 0; t < trees; ++t) {
      const int leaf = leaf_assign_[t][static_cast<std::size_t>(i)];
      const double w = 1.0 / (static_cast<double>(trees) *
                              leaf_count_[t][static_cast<std::size_t>(leaf)]);
      for (Eigen::Index j = 0; j < n_; ++j) {
        if (leaf_assign_[t][static_cast<std::size_t>(j)] == leaf) {
          acc[static_cast<int>(j)] += w;
        }
      }
    }
    return {acc.begin(), acc.end()};
  }

 private:
  std::vector<std::vector<int>> leaf_assign_;  // per tree, per analysis row
  std::vector<std::vector<int>> leaf_count_;   // per tree, per leaf
  Eigen::Index n_;
};

/// Cubic B-spline basis values at x for clamped knots; Cox-de Boor on the
/// padded knot vector.
Vec bspline_row(double x, const std::vector<double>& interior, double lo,
                double hi) {
  constexpr int kDegree = 3;
  std::vector<double> knots;
  for (int i = 0; i <= kDegree; ++i) knots.push_back(lo);
  for (double t : interior) knots.push_back(t);
  for (int i = 0; i <= kDegree; ++i) knots.push_back(hi);
  const int n_basis = static_cast<int>(knots.size()) - kDegree - 1;
  const double xc = std::clamp(x, lo, hi);

  std::vector<double> b(knots.size() - 1, 0.0);
  // degree 0
  for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
    const bool last = knots[i + 1] >= hi;
    b[i] = (xc >= knots[i] && (xc < knots[i + 1] || (last && xc <= knots[i + 1])))
               ? 1.0
               : 0.0;
  }
  for (int deg = 1; deg <= kDegree; ++deg) {
    for (std::size_t i = 0; i + deg + 1 < knots.size(); ++i) {
      double left = 0.0;
      double right = 0.0;
      const double dl = knots[i + deg] - knots[i];
      if (dl > 0.0) left = (xc - knots[i]) / dl * b[i];
      const double dr = knots[i + deg + 1] - knots[i + 1];
      if (dr > 0.0) right = (knots[i + deg + 1] - xc) / dr * b[i + 1];
      b[i] = left + right;
    }
  }
  Vec out(n_basis);
  for (int i = 0; i < n_basis; ++i) out(i) = b[static_cast<std::size_t>(i)];
  return out;
}

std::vector<double> quantile_knots(std::vector<double> sorted_vals, int count) {
  std::vector<double> knots;
  const auto n = sorted_vals.size();
  for (int i = 1; i <= count; ++i) {
    const double q = static_cast<double>(i) / (count + 1);
    const auto idx = static_cast<std::size_t>(q * static_cast<double>(n - 1));
    knots.push_back(sorted_vals[idx]);
  }
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
  return knots;
}

Mat build_learner_basis(const Mat& z_analysis, const Mat& z_training,
                        const TsciOptions& options) {
  const Eigen::Index n = z_analysis.rows();
  const Eigen::Index p = z_analysis.cols();
  std::vector<Vec> cols;

  if (options.learner == TsciLearner::basis_spline) {
    for (Eigen::Index j = 0; j < p; ++j) {
      std::vector<double> vals(static_cast<std::size_t>(z_training.rows()));
      for (Eigen::Index i = 0; i < z_training.rows(); ++i) {
        vals[static_cast<std::size_t>(i)] = z_training(i, j);
      }
      std::sort(vals.begin(), vals.end());
      const double lo = vals.front();
      const double hi = vals.back();
      const std::vector<double> knots =
          quantile_knots(vals, options.spline_interior_knots);
      const Eigen::Index n_basis =
          static_cast<Eigen::Index>(knots.size()) + 4;
      Mat block(n, n_basis);
      for (Eigen::Index i = 0; i < n; ++i) {
        block.row(i) = bspline_row(z_analysis(i, j), knots, lo, hi).transpose();
      }
      for (Eigen::Index c = 0; c < n_basis; ++c) cols.push_back(block.col(c));
    }
  } else {
    for (Eigen::Index j = 0; j < p; ++j) {
      Vec power = z_analysis.col(j);
      cols.push_back(power);
      for (int deg = 2; deg <= options.polynomial_degree; ++deg) {
        power = power.cwiseProduct(z_analysis.col(j));
        cols.push_back(power);
      }
    }
  }
  for (Eigen::Index j = 0; j < p; ++j) {
    for (Eigen::Index k = j + 1; k < p; ++k) {
      cols.push_back(z_analysis.col(j).cwiseProduct(z_analysis.col(k)));
    }
  }
  Mat basis(n, static_cast<Eigen::Index>(cols.size()) + 1);
  basis.col(0).setOnes();
  for (std::size_t c = 0; c < cols.size(); ++c) {
    basis.col(static_cast<Eigen::Index>(c) + 1) = cols[c];
  }
  return basis;
}

}  // namespace

HatMatrixFit fit_hat_matrix(const IVDataset& dataset, const TsciOptions& options) {
  const Eigen::Index n = dataset.n();
  if (n < 200) throw SplitTooSmall("need at least 200 observations");
  if (!(options.split_fraction > 0.2 && options.split_fraction < 0.8)) {
    throw SplitTooSmall("split_fraction must lie in (0.2, 0.8)");
  }

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(options.seed, 0x5b17));
  rng.shuffle(order);
  const auto n1 = static_cast<std::size_t>(
      std::lround(options.split_fraction * static_cast<double>(n)));
  HatMatrixFit fit;
  fit.analysis_rows.assign(order.begin(), order.begin() + static_cast<long>(n1));
  fit.training_rows.assign(order.begin() + static_cast<long>(n1), order.end());
  std::sort(fit.analysis_rows.begin(), fit.analysis_rows.end());
  std::sort(fit.training_rows.begin(), fit.training_rows.end());

  Mat z_a(static_cast<Eigen::Index>(n1), dataset.p());
  Vec d_a(static_cast<Eigen::Index>(n1));
  for (std::size_t i = 0; i < n1; ++i) {
    z_a.row(static_cast<Eigen::Index>(i)) =
        dataset.instruments.row(fit.analysis_rows[i]);
    d_a(static_cast<Eigen::Index>(i)) = dataset.exposure(fit.analysis_rows[i]);
  }
  Mat z_b(static_cast<Eigen::Index>(fit.training_rows.size()), dataset.p());
  Vec d_b(static_cast<Eigen::Index>(fit.training_rows.size()));
  for (std::size_t i = 0; i < fit.training_rows.size(); ++i) {
    z_b.row(static_cast<Eigen::Index>(i)) =
        dataset.instruments.row(fit.training_rows[i]);
    d_b(static_cast<Eigen::Index>(i)) = dataset.exposure(fit.training_rows[i]);
  }

  if (options.learner == TsciLearner::random_forest) {
    const int trees = options.forest_trees;
    const int mtry = std::max(1, (static_cast<int>(dataset.p()) + 2) / 3);
    std::vector<std::vector<int>> leaf_assign(static_cast<std::size_t>(trees));
    std::vector<std::vector<int>> leaf_count(static_cast<std::size_t>(trees));
    for (int t = 0; t < trees; ++t) {
      Rng tree_rng(derive_seed(options.seed, 1000 + static_cast<std::uint64_t>(t)));
      std::vector<int> boot(static_cast<std::size_t>(z_b.rows()));
      for (auto& idx : boot) {
        idx = static_cast<int>(tree_rng.below(static_cast<std::uint64_t>(z_b.rows())));
      }
      const Tree tree = grow_tree(z_b, d_b, boot, options.forest_min_leaf,
                                  options.forest_max_depth, mtry, tree_rng);
      auto& assign = leaf_assign[static_cast<std::size_t>(t)];
      assign.resize(n1);
      std::vector<int> counts(static_cast<std::size_t>(tree.n_leaves), 0);
      for (std::size_t i = 0; i < n1; ++i) {
        const int leaf = tree.leaf_of(z_a.row(static_cast<Eigen::Index>(i)));
        assign[i] = leaf;
        ++counts[static_cast<std::size_t>(leaf)];
      }
      // guard empty leaves on the analysis side
      for (auto& c : counts) c = std::max(c, 1);
      leaf_count[static_cast<std::size_t>(t)] = std::move(counts);
    }
    fit.q = std::make_shared<ForestHat>(std::move(leaf_assign),
                                        std::move(leaf_count),
                                        static_cast<Eigen::Index>(n1));
  } else {
    const Mat basis = build_learner_basis(z_a, z_b, options);
    fit.q = std::make_shared<ProjectionHat>(basis);
  }
  fit.fitted_exposure = fit.q->apply(d_a);
  return fit;
}

EstimateReport tsci(const IVDataset& dataset, const TsciOptions& options) {
  if (!dataset.centered) throw InvalidArgument("tsci requires a centered dataset");
  const HatMatrixFit hat = fit_hat_matrix(dataset, options);
  const auto n1 = static_cast<Eigen::Index>(hat.analysis_rows.size());
  const Eigen::Index p = dataset.p();

  Mat z_a(n1, p);
  Vec d_a(n1);
  Vec y_a(n1);
  for (Eigen::Index i = 0; i < n1; ++i) {
    const int row = hat.analysis_rows[static_cast<std::size_t>(i)];
    z_a.row(i) = dataset.instruments.row(row);
    d_a(i) = dataset.exposure(row);
    y_a(i) = dataset.outcome(row);
  }

  const Vec f_hat = hat.fitted_exposure;
  const Vec qy = hat.q->apply(y_a);
  Mat z_tilde(n1, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    z_tilde.col(j) = hat.q->apply(z_a.col(j));
  }

  const Mat ztz_tilde = z_tilde.transpose() * z_tilde;
  const Eigen::LDLT<Mat> zt_ldlt(ztz_tilde);
  auto project_off_ztilde = [&](const Vec& v) -> Vec {
    return v - z_tilde * zt_ldlt.solve(z_tilde.transpose() * v);
  };

  const Vec g = project_off_ztilde(f_hat);  // P_perp(Z~) Q D
  const double dmd = f_hat.dot(g);
  const double ymd = qy.dot(g);
  if (dmd / static_cast<double>(n1) < 1e-8) {
    throw WeakCurvature("curvature quadratic form D'MD/n1 below 1e-8");
  }
  const double beta_raw = ymd / dmd;

  // trace correction: sum_i M_ii * delta_i * eps_i
  Vec m_diag(n1);
  if (hat.q->is_projection()) {
    const Vec lev_q = hat.q->leverage();
    const Mat zt_inv_zt = zt_ldlt.solve(z_tilde.transpose());
    for (Eigen::Index i = 0; i < n1; ++i) {
      const double lev_zt = z_tilde.row(i).dot(zt_inv_zt.col(i));
      m_diag(i) = lev_q(i) - lev_zt;
    }
  } else {
    for (Eigen::Index i = 0; i < n1; ++i) {
      const auto col = hat.q->column(static_cast<int>(i));
      double norm2 = 0.0;
      Vec ztc = Vec::Zero(p);
      for (const auto& [row, w] : col) {
        norm2 += w * w;
        ztc += w * z_tilde.row(row).transpose();
      }
      m_diag(i) = norm2 - ztc.dot(zt_ldlt.solve(ztc));
    }
  }

  const Vec delta_hat = d_a - f_hat;
  // full-sample residual projection for the structural errors
  const Mat ztz_full = dataset.instruments.transpose() * dataset.instruments;
  const Eigen::LDLT<Mat> full_ldlt(ztz_full);
  const Vec resid_full = dataset.outcome - beta_raw * dataset.exposure;
  const Vec eps_full =
      resid_full - dataset.instruments *
                       full_ldlt.solve(dataset.instruments.transpose() * resid_full);
  Vec eps_a(n1);
  for (Eigen::Index i = 0; i < n1; ++i) {
    eps_a(i) = eps_full(hat.analysis_rows[static_cast<std::size_t>(i)]);
  }

  const double correction = m_diag.cwiseProduct(delta_hat).dot(eps_a) / dmd;
  const double beta = beta_raw - correction;

  // curvature diagnostic: fitted first stage net of the raw instrument span
  const Mat ztz_a = z_a.transpose() * z_a;
  const Eigen::LDLT<Mat> a_ldlt(ztz_a);
  const Vec curv = f_hat - z_a * a_ldlt.solve(z_a.transpose() * f_hat);
  const double curvature_stat = curv.squaredNorm() / static_cast<double>(n1);
  const double sigma2_delta =
      delta_hat.squaredNorm() / static_cast<double>(n1);
  const double df_eff = std::max(1.0, m_diag.sum());
  const double curv_chi2 =
      sigma2_delta > 0.0 ? curv.squaredNorm() / sigma2_delta
                         : std::numeric_limits<double>::infinity();
  const bool weak_curvature =
      curv_chi2 <= stats::chi2_quantile(0.95, df_eff);

  // sandwich on the generated-instrument linearization
  const Vec w = hat.q->apply(g);  // M D (Q symmetric)
  Vec resid_b = y_a - beta * d_a;
  resid_b -= z_a * a_ldlt.solve(z_a.transpose() * resid_b);
  const double var =
      (w.array().square() * resid_b.array().square()).sum() / (dmd * dmd);

  EstimateReport report;
  report.method = "tsci";
  report.beta_hat = beta;
  report.se = std::sqrt(var);
  report.ci = wald_interval(beta, *report.se, options.alpha);
  report.diagnostics["beta_uncorrected"] = beta_raw;
  report.diagnostics["bias_correction"] = correction;
  report.diagnostics["curvature_stat"] = curvature_stat;
  report.diagnostics["curvature_df"] = df_eff;
  report.diagnostics["dmd_over_n"] = dmd / static_cast<double>(n1);
  report.diagnostics["n_analysis"] = static_cast<double>(n1);
  if (weak_curvature) report.warnings.push_back("WeakCurvature");
  return report;
}

InteractionBasis build_interaction_basis(const IVDataset& dataset, int v) {
  const int p = static_cast<int>(dataset.p());
  if (v < 1 || v > p) throw InvalidArgument("need 1 <= v <= p");
  double d = 0.0;
  for (int j = 0; j < v; ++j) {
    double c = 1.0;
    for (int i = 1; i <= j; ++i) {
      c *= static_cast<double>(p - j + i) / static_cast<double>(i);
    }
    d += c;
  }
  if (d > 1e5) throw CombinatorialLimit("interaction basis exceeds 1e5 columns");

  const Eigen::Index n = dataset.n();
  const Vec means = dataset.instruments.colwise().mean();
  Mat centered = dataset.instruments.rowwise() - means.transpose();

  InteractionBasis basis;
  basis.v = v;
  basis.columns.resize(n, static_cast<Eigen::Index>(d));
  Eigen::Index col = 0;
  for (int j = 0; j < v; ++j) {
    const int size = p - j;
    std::vector<int> subset(static_cast<std::size_t>(size));
    std::iota(subset.begin(), subset.end(), 0);
    while (true) {
      Vec product = Vec::Ones(n);
      for (int k : subset) product = product.cwiseProduct(centered.col(k));
      basis.columns.col(col++) = product;
      basis.subset_index.push_back(subset);
      int idx = size - 1;
      while (idx >= 0 && subset[static_cast<std::size_t>(idx)] == p - size + idx) {
        --idx;
      }
      if (idx < 0) break;
      ++subset[static_cast<std::size_t>(idx)];
      for (int t = idx + 1; t < size; ++t) {
        subset[static_cast<std::size_t>(t)] = subset[static_cast<std::size_t>(t - 1)] + 1;
      }
    }
  }
  return basis;
}

EstimateReport g_interaction(const IVDataset& dataset, int v,
                             const GInteractionOptions& options) {
  const InteractionBasis basis = build_interaction_basis(dataset, v);
  const Eigen::Index n = dataset.n();
  const Eigen::Index d = basis.d();
  const double nd = static_cast<double>(n);

  const Vec a = basis.columns.transpose() * dataset.outcome / nd;
  const Vec b = basis.columns.transpose() * dataset.exposure / nd;

  // first-stage F of the exposure on the interaction columns (with mean)
  const Vec h_means = basis.columns.colwise().mean();
  const Mat hc = basis.columns.rowwise() - h_means.transpose();
  const Vec dc = dataset.exposure.array() - dataset.exposure.mean();
  const Mat hch = hc.transpose() * hc;
  const Vec hcd = hc.transpose() * dc;
  const Eigen::LDLT<Mat> hch_ldlt(hch);
  const Vec coef = hch_ldlt.solve(hcd);
  const double tss = dc.squaredNorm();
  const double ess = std::min(coef.dot(hcd), tss);
  const double rss = std::max(tss - ess, 1e-300);
  const double df2 = nd - static_cast<double>(d) - 1.0;
  const double f_stat = df2 > 0.0 ? (ess / static_cast<double>(d)) / (rss / df2)
                                  : std::numeric_limits<double>::infinity();
  if (f_stat < options.min_first_stage_f) {
    throw WeakInteractionInstrument(
        "interaction-basis first-stage F = " + std::to_string(f_stat) +
        " below " + std::to_string(options.min_first_stage_f));
  }

  const double btb = b.squaredNorm();
  const double beta = a.dot(b) / btb;

  // M-estimation sandwich: Var = b' S b / (b'b)^2 / n with S the moment
  // outer-product matrix; only the b-contraction of S is needed.
  const Vec bth = basis.columns * b;  // n-vector of b'h_i
  const Vec resid = dataset.outcome - beta * dataset.exposure;
  const double bsb =
      (bth.array().square() * resid.array().square()).sum() / nd;
  const double var = bsb / (btb * btb) / nd;

  EstimateReport report;
  report.method = "g_interaction";
  report.beta_hat = beta;
  report.se = std::sqrt(var);
  report.ci = wald_interval(beta, *report.se, options.alpha);
  report.diagnostics["v"] = static_cast<double>(v);
  report.diagnostics["d"] = static_cast<double>(d);
  report.diagnostics["first_stage_f"] = f_stat;

  // mutual-independence diagnostic
  const Vec z_means = dataset.instruments.colwise().mean();
  const Mat zc = dataset.instruments.rowwise() - z_means.transpose();
  double max_corr = 0.0;
  for (Eigen::Index j = 0; j < dataset.p(); ++j) {
    for (Eigen::Index k = j + 1; k < dataset.p(); ++k) {
      const double c = zc.col(j).dot(zc.col(k)) /
                       std::sqrt(zc.col(j).squaredNorm() * zc.col(k).squaredNorm());
      max_corr = std::max(max_corr, std::abs(c));
    }
  }
  report.diagnostics["max_pairwise_corr"] = max_corr;
  if (max_corr > options.correlation_warning) {
    report.warnings.push_back("CorrelatedInstruments");
  }
  return report;
}

}  // namespace ivkit
