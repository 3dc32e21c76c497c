#pragma once

#include <vector>

#include <Eigen/Dense>

#include "ivkit/dataset.hpp"
#include "ivkit/rng.hpp"
#include "ivkit/simulation.hpp"

namespace ivkit::testutil {

/// Independent least-squares oracle: plain normal equations, no shared code
/// with the library's fitting path.
inline Vec ols_oracle(const Mat& x, const Vec& y) {
  return (x.transpose() * x).ldlt().solve(x.transpose() * y);
}

/// Projection of v onto the column space of x (oracle path).
inline Vec project_oracle(const Mat& x, const Vec& v) {
  return x * ols_oracle(x, v);
}

/// Small random centered dataset for property checks.
inline IVDataset random_dataset(std::uint64_t seed, Eigen::Index n, Eigen::Index p) {
  Rng rng(seed);
  IVDataset ds;
  ds.instruments.resize(n, p);
  ds.exposure.resize(n);
  ds.outcome.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) ds.instruments(i, j) = rng.normal();
    ds.exposure(i) = ds.instruments.row(i).sum() * 0.4 + rng.normal();
    ds.outcome(i) = 0.7 * ds.exposure(i) + rng.normal();
  }
  return center_and_validate(ds);
}

/// Majority-rule linear scenario used across suites: p = 7 with 3 invalid
/// instruments at well-separated magnitudes.
inline SimScenario majority_scenario(Eigen::Index n, std::uint64_t seed) {
  SimScenario sc;
  sc.family = ScenarioFamily::linear;
  sc.n = n;
  sc.p = 7;
  sc.beta = 1.0;
  sc.gamma = (Vec(7) << 0.45, 0.55, 0.4, 0.6, 0.5, 0.35, 0.5).finished();
  sc.pi_spec = PiSpec::at({{4, 0.5}, {5, 0.4}, {6, -0.6}});
  sc.confounding = 0.6;
  sc.seed = seed;
  return sc;
}

}  // namespace ivkit::testutil
