#include "ivkit/optim.hpp"

#include <cmath>

#include "ivkit/errors.hpp"

namespace ivkit {

BfgsResult minimize_bfgs(const ObjectiveFn& objective, Vec x0,
                         const BfgsOptions& options) {
  const Eigen::Index dim = x0.size();
  BfgsResult result;
  result.x = std::move(x0);
  result.gradient = Vec::Zero(dim);
  result.value = objective(result.x, result.gradient);
  if (!std::isfinite(result.value) || !result.gradient.allFinite()) {
    throw OptimizerDiverged("objective not evaluable at the starting point");
  }

  Mat h_inv = Mat::Identity(dim, dim);
  Vec grad = result.gradient;

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    if (grad.cwiseAbs().maxCoeff() < options.gradient_tolerance) {
      result.converged = true;
      break;
    }
    Vec direction = -(h_inv * grad);
    double slope = direction.dot(grad);
    if (!(slope < 0.0)) {
      // lost positive definiteness; restart from steepest descent
      h_inv.setIdentity();
      direction = -grad;
      slope = direction.dot(grad);
    }

    // Armijo backtracking
    constexpr double kC1 = 1e-4;
    double step = options.initial_step;
    double f_new = std::numeric_limits<double>::infinity();
    Vec x_new;
    Vec g_new = Vec::Zero(dim);
    bool accepted = false;
    for (int ls = 0; ls < options.max_line_search; ++ls) {
      x_new = result.x + step * direction;
      f_new = objective(x_new, g_new);
      if (std::isfinite(f_new) && g_new.allFinite() &&
          f_new <= result.value + kC1 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // no further progress possible at double precision

    const Vec s = x_new - result.x;
    const Vec y = g_new - grad;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const Mat ident = Mat::Identity(dim, dim);
      const Mat left = ident - rho * s * y.transpose();
      h_inv = left * h_inv * left.transpose() + rho * s * s.transpose();
    }

    result.x = std::move(x_new);
    result.value = f_new;
    grad = std::move(g_new);
    result.iterations = iter + 1;
  }
  result.gradient = grad;
  if (!result.converged &&
      grad.cwiseAbs().maxCoeff() < options.gradient_tolerance) {
    result.converged = true;
  }
  return result;
}

}  // namespace ivkit
