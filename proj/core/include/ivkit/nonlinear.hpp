#pragma once

#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include "ivkit/dataset.hpp"
#include "ivkit/report.hpp"

namespace ivkit {

enum class TsciLearner { basis_spline, polynomial, random_forest };

/// Weight operator of a first-stage learner evaluated on the analysis
/// split: fitted values are Q times the split's exposure vector. Basis
/// learners yield an orthogonal projection; the forest learner yields
/// symmetric leaf-averaging weights.
class HatOperator {
 public:
  virtual ~HatOperator() = default;
  virtual Eigen::Index size() const = 0;
  virtual Vec apply(const Vec& v) const = 0;
  virtual bool is_projection() const = 0;
  /// diag(Q) for projection operators.
  virtual Vec leverage() const = 0;
  /// Column i of Q as (row, weight) pairs.
  virtual std::vector<std::pair<int, double>> column(int i) const = 0;
  /// Materialized Q; intended for small problems (tests).
  Mat dense() const;
};

/// First-stage fit on the analysis split: weights, fitted exposure, and the
/// split assignment (analysis rows first).
struct HatMatrixFit {
  std::shared_ptr<const HatOperator> q;
  Vec fitted_exposure;
  std::vector<int> analysis_rows;
  std::vector<int> training_rows;

  Mat dense_q() const { return q->dense(); }
};

struct TsciOptions {
  TsciLearner learner = TsciLearner::basis_spline;
  double split_fraction = 0.5;
  std::uint64_t seed = 1u;
  double alpha = 0.05;
  int spline_interior_knots = 5;
  int polynomial_degree = 3;
  int forest_trees = 50;
  int forest_min_leaf = 25;
  int forest_max_depth = 12;
};

/// Builds the sample-split first stage: structure (knots, polynomial terms,
/// tree splits) from the training rows, weights over the analysis rows.
HatMatrixFit fit_hat_matrix(const IVDataset& dataset, const TsciOptions& options);

/// Curvature-identified estimator: projects the learner fit off the linear
/// instrument span, estimates the effect from the residual curvature, and
/// applies the trace bias correction. Emits a WeakCurvature warning when
/// the fitted curvature is not significant against the first-stage noise,
/// and throws WeakCurvature when the curvature quadratic form is
/// numerically zero.
EstimateReport tsci(const IVDataset& dataset, const TsciOptions& options = {});

/// Centered products of instrument subsets: one column per subset of size
/// p - j for j = 0..v-1, lexicographic in the kept subset; d equals the
/// binomial sum over subset sizes.
struct InteractionBasis {
  int v = 0;
  Mat columns;  // n x d
  std::vector<std::vector<int>> subset_index;
  Eigen::Index d() const { return columns.cols(); }
};

InteractionBasis build_interaction_basis(const IVDataset& dataset, int v);

struct GInteractionOptions {
  double alpha = 0.05;
  double min_first_stage_f = 4.0;
  double correlation_warning = 0.2;
};

/// Moment estimator on the interaction basis (identity-weighted over the d
/// moment conditions); for p = 2, v = 1 this reduces to the ratio of the
/// single interaction moment of the outcome to that of the exposure. Throws
/// WeakInteractionInstrument when the basis first-stage F falls below the
/// threshold.
EstimateReport g_interaction(const IVDataset& dataset, int v,
                             const GInteractionOptions& options = {});

}  // namespace ivkit
