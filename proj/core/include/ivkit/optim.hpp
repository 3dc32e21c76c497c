#pragma once

#include <functional>

#include "ivkit/dataset.hpp"

namespace ivkit {

/// Objective callback: returns f(x) and fills grad (same length as x).
/// Returning a non-finite value rejects the point during line search.
using ObjectiveFn = std::function<double(const Vec& x, Vec& grad)>;

struct BfgsOptions {
  int max_iterations = 500;
  double gradient_tolerance = 1e-8;  // max-norm of the gradient
  double initial_step = 1.0;
  int max_line_search = 60;
};

struct BfgsResult {
  Vec x;
  double value = 0.0;
  Vec gradient;
  int iterations = 0;
  bool converged = false;
};

/// Dense BFGS minimizer with Armijo backtracking. Throws OptimizerDiverged
/// when the starting point is not evaluable.
BfgsResult minimize_bfgs(const ObjectiveFn& objective, Vec x0,
                         const BfgsOptions& options = {});

}  // namespace ivkit
