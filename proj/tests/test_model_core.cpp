#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ivkit/csv.hpp"
#include "ivkit/errors.hpp"
#include "ivkit/linear.hpp"
#include "ivkit/reduced_form.hpp"
#include "testutil.hpp"

using namespace ivkit;

TEST_CASE("center_and_validate subtracts hand-computed column means") {
  IVDataset ds;
  ds.instruments.resize(5, 2);
  ds.instruments << 1, 5, 2, 3, 3, 8, 4, 1, 5, 3;
  ds.outcome = (Vec(5) << 1, 2, 3, 4, 5).finished();
  ds.exposure = (Vec(5) << 2, 4, 6, 8, 10).finished();

  const IVDataset centered = center_and_validate(ds);
  CHECK(centered.centered);
  Mat expected_z(5, 2);
  expected_z << -2, 1, -1, -1, 0, 4, 1, -3, 2, -1;
  CHECK((centered.instruments - expected_z).cwiseAbs().maxCoeff() < 1e-12);
  const Vec expected_y = (Vec(5) << -2, -1, 0, 1, 2).finished();
  const Vec expected_d = (Vec(5) << -4, -2, 0, 2, 4).finished();
  CHECK((centered.outcome - expected_y).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((centered.exposure - expected_d).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("center_and_validate is idempotent") {
  const IVDataset ds = testutil::random_dataset(11, 60, 3);
  const IVDataset again = center_and_validate(ds);
  CHECK((again.outcome - ds.outcome).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((again.exposure - ds.exposure).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((again.instruments - ds.instruments).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("constant instrument column fails the rank check") {
  IVDataset ds;
  ds.instruments.resize(6, 2);
  ds.instruments << 1, 7, 2, 7, 3, 7, 4, 7, 5, 7, 6, 7;
  ds.outcome = Vec::LinSpaced(6, 0, 5);
  ds.exposure = Vec::LinSpaced(6, 1, 6);
  CHECK_THROWS_AS(center_and_validate(ds), RankDeficient);
}

TEST_CASE("dimension checks") {
  IVDataset ds;
  ds.instruments = Mat::Random(10, 2);
  ds.outcome = Vec::Random(9);
  ds.exposure = Vec::Random(10);
  CHECK_THROWS_AS(center_and_validate(ds), DimensionMismatch);

  IVDataset tiny;
  tiny.instruments = Mat::Random(3, 2);
  tiny.outcome = Vec::Random(3);
  tiny.exposure = Vec::Random(3);
  CHECK_THROWS_AS(center_and_validate(tiny), DimensionMismatch);
}

TEST_CASE("residualize_covariates matches a hand-solved projection") {
  IVDataset ds;
  ds.outcome = (Vec(6) << 1, 4, 2, 8, 5, 7).finished();
  ds.exposure = (Vec(6) << 2, 1, 4, 3, 6, 5).finished();
  ds.instruments = (Vec(6) << 1, 3, 2, 5, 4, 6).finished();
  ds.covariates = Mat(6, 1);
  *ds.covariates << 1, 2, 3, 4, 5, 6;

  const IVDataset centered = center_and_validate(ds);
  const IVDataset out = residualize_covariates(centered);
  CHECK_FALSE(out.covariates.has_value());

  // centered outcome (-3.5,-0.5,-2.5,3.5,0.5,2.5) on centered covariate
  // (-2.5,...,2.5): slope 39/35, frozen residuals:
  const Vec expected =
      (Vec(6) << -5.0 / 7.0, 41.0 / 35.0, -68.0 / 35.0, 103.0 / 35.0,
       -41.0 / 35.0, -2.0 / 7.0)
          .finished();
  CHECK((out.outcome - expected).cwiseAbs().maxCoeff() < 1e-12);

  // remaining columns against the oracle projection
  const Vec x = centered.covariates->col(0);
  Mat xm(6, 1);
  xm.col(0) = x;
  const Vec d_res = centered.exposure - testutil::project_oracle(xm, centered.exposure);
  CHECK((out.exposure - d_res).cwiseAbs().maxCoeff() < 1e-12);
  const Vec z_res = centered.instruments.col(0) -
                    testutil::project_oracle(xm, centered.instruments.col(0));
  CHECK((out.instruments.col(0) - z_res).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("orthogonal covariates leave the data unchanged") {
  Rng rng(5);
  const Eigen::Index n = 200;
  IVDataset ds;
  ds.instruments.resize(n, 2);
  ds.outcome.resize(n);
  ds.exposure.resize(n);
  Mat x(n, 1);
  // covariate alternates +-1 on pairs built to be exactly orthogonal to
  // every other column: duplicate each random row with the covariate flipped
  for (Eigen::Index i = 0; i < n; i += 2) {
    const double z1 = rng.normal();
    const double z2 = rng.normal();
    const double d = rng.normal();
    const double y = rng.normal();
    for (Eigen::Index k : {i, i + 1}) {
      ds.instruments(k, 0) = z1;
      ds.instruments(k, 1) = z2;
      ds.exposure(k) = d;
      ds.outcome(k) = y;
    }
    x(i, 0) = 1.0;
    x(i + 1, 0) = -1.0;
  }
  ds.covariates = x;
  const IVDataset centered = center_and_validate(ds);
  const IVDataset out = residualize_covariates(centered);
  CHECK((out.outcome - centered.outcome).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((out.exposure - centered.exposure).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((out.instruments - centered.instruments).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("covariate equal to an instrument column zeroes it") {
  const IVDataset base = testutil::random_dataset(17, 80, 2);
  IVDataset ds = base;
  ds.covariates = Mat(80, 1);
  ds.covariates->col(0) = base.instruments.col(1);
  const IVDataset out = residualize_covariates(ds);
  CHECK(out.instruments.col(1).cwiseAbs().maxCoeff() < 1e-10);
  CHECK_THROWS_AS(center_and_validate(out), RankDeficient);
}

TEST_CASE("reduced form on a frozen scalar example") {
  IVDataset ds;
  ds.instruments = (Vec(4) << 1, -1, 2, -2).finished();
  ds.exposure = (Vec(4) << 2, -2, 3, -3).finished();
  ds.outcome = (Vec(4) << 1, -1, 1, -1).finished();
  const IVDataset centered = center_and_validate(ds);
  const ReducedFormFit fit = fit_reduced_form(centered);
  CHECK(fit.gamma_hat(0) == doctest::Approx(1.6).epsilon(1e-12));
  CHECK(fit.Gamma_hat(0) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(fit.ratio(0) == doctest::Approx(0.375).epsilon(1e-12));
}

TEST_CASE("reduced form recovers exact interpolation and zero outcomes") {
  Rng rng(23);
  IVDataset ds;
  ds.instruments.resize(50, 2);
  for (Eigen::Index i = 0; i < 50; ++i) {
    ds.instruments(i, 0) = rng.normal();
    ds.instruments(i, 1) = rng.normal();
  }
  const Vec c = (Vec(2) << 0.5, -0.2).finished();
  ds.outcome = ds.instruments * c;
  ds.exposure = ds.instruments.col(0) + ds.instruments.col(1);
  const IVDataset centered = center_and_validate(ds);
  ReducedFormFit fit = fit_reduced_form(centered);
  CHECK((fit.Gamma_hat - c).cwiseAbs().maxCoeff() < 1e-9);

  IVDataset zero = centered;
  zero.outcome.setZero();
  fit = fit_reduced_form(zero);
  CHECK(fit.Gamma_hat.cwiseAbs().maxCoeff() < 1e-12);
  CHECK(fit.cov.topLeftCorner(2, 2).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("noiseless reduced form reproduces beta*gamma + pi") {
  SimScenario sc = testutil::majority_scenario(4000, 99);
  sc.extras["sigma_delta"] = 0.0;
  sc.extras["sigma_eps"] = 0.0;
  const GeneratedData gen = generate(sc);
  const ReducedFormFit fit = fit_reduced_form(center_and_validate(gen.dataset));
  const Vec expected = sc.beta * gen.truth.gamma + gen.truth.pi;
  CHECK((fit.Gamma_hat - expected).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("projection idempotence on random full-rank designs") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    const IVDataset ds = testutil::random_dataset(seed, 40, 5);
    const Mat& z = ds.instruments;
    const Mat pz = z * (z.transpose() * z).ldlt().solve(z.transpose());
    CHECK((pz * pz - pz).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("column scaling equivariance") {
  // exactly orthogonal instrument columns: scaling column j scales only
  // that coefficient pair
  Rng rng(31);
  Mat raw(64, 3);
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    for (Eigen::Index j = 0; j < 3; ++j) raw(i, j) = rng.normal();
  }
  const Mat q = Eigen::HouseholderQR<Mat>(raw).householderQ() * Mat::Identity(64, 3);
  IVDataset ds;
  ds.instruments = q;
  ds.exposure = q * (Vec(3) << 0.5, 0.4, 0.3).finished();
  for (Eigen::Index i = 0; i < 64; ++i) ds.exposure(i) += 0.1 * rng.normal();
  ds.outcome = 0.8 * ds.exposure;
  for (Eigen::Index i = 0; i < 64; ++i) ds.outcome(i) += 0.1 * rng.normal();
  const IVDataset centered = center_and_validate(ds);
  const ReducedFormFit base = fit_reduced_form(centered);

  IVDataset scaled = centered;
  scaled.instruments.col(1) *= 4.0;  // power of two: exact arithmetic
  const ReducedFormFit after = fit_reduced_form(center_and_validate(scaled));
  CHECK(after.gamma_hat(1) == doctest::Approx(base.gamma_hat(1) / 4.0).epsilon(1e-10));
  CHECK(after.Gamma_hat(1) == doctest::Approx(base.Gamma_hat(1) / 4.0).epsilon(1e-10));
  CHECK(after.gamma_hat(0) == doctest::Approx(base.gamma_hat(0)).epsilon(1e-10));
  CHECK(after.Gamma_hat(2) == doctest::Approx(base.Gamma_hat(2)).epsilon(1e-10));

  // general designs: the ratio is scaling invariant
  const IVDataset gen = testutil::random_dataset(77, 120, 4);
  const ReducedFormFit f0 = fit_reduced_form(gen);
  IVDataset gen2 = gen;
  gen2.instruments.col(2) *= -2.5;
  const ReducedFormFit f1 = fit_reduced_form(center_and_validate(gen2));
  for (Eigen::Index j = 0; j < 4; ++j) {
    CHECK(f1.ratio(j) == doctest::Approx(f0.ratio(j)).epsilon(1e-9));
  }
}

TEST_CASE("summary statistics load into a diagonal-covariance fit") {
  const std::vector<SummaryRecord> records{{1.0, 0.1, 2.0, 0.2}};
  const ReducedFormFit fit = load_summary_stats(records);
  CHECK(fit.p() == 1);
  CHECK(fit.source == ReducedFormFit::Source::summary);
  CHECK(fit.cov(0, 0) == doctest::Approx(0.04).epsilon(1e-15));
  CHECK(fit.cov(1, 1) == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(fit.cov(0, 1) == 0.0);
  CHECK_FALSE(fit.n.has_value());

  CHECK_THROWS_AS(load_summary_stats({{1.0, 0.0, 2.0, 0.2}}), NonPositiveSE);
  CHECK_THROWS_AS(load_summary_stats({}), EmptyInput);
}

TEST_CASE("summary export round trip preserves the median estimate") {
  const SimScenario sc = testutil::majority_scenario(2000, 4242);
  const GeneratedData gen = generate(sc);
  const ReducedFormFit fit = fit_reduced_form(center_and_validate(gen.dataset));
  const auto records = to_summary_records(fit);
  const ReducedFormFit reloaded = load_summary_stats(records, fit.n);
  CHECK(median_estimator(fit).beta_hat == median_estimator(reloaded).beta_hat);
}

TEST_CASE("csv round trip for individual and summary data") {
  const IVDataset ds = testutil::random_dataset(3, 25, 2);
  const std::string path = "model_core_test.csv";
  write_individual_csv(path, ds);
  const IVDataset back = load_individual_csv(path);
  CHECK(back.n() == 25);
  CHECK(back.p() == 2);
  CHECK((back.outcome - ds.outcome).cwiseAbs().maxCoeff() < 1e-10);
  std::remove(path.c_str());
}
