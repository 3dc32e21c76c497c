#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "ivkit/errors.hpp"
#include "ivkit/linear.hpp"
#include "ivkit/selection.hpp"
#include "testutil.hpp"

using namespace ivkit;

namespace {

std::vector<int> all_of(int p) {
  std::vector<int> v(static_cast<std::size_t>(p));
  for (int j = 0; j < p; ++j) v[static_cast<std::size_t>(j)] = j;
  return v;
}

/// Brute-force maximal pairwise-overlapping subsets (subset enumeration).
std::vector<int> max_clique_brute_force(const std::vector<Interval>& ivs) {
  const int n = static_cast<int>(ivs.size());
  std::vector<int> best;
  for (int mask = 1; mask < (1 << n); ++mask) {
    std::vector<int> members;
    for (int i = 0; i < n; ++i) {
      if (mask & (1 << i)) members.push_back(i);
    }
    bool ok = true;
    for (std::size_t a = 0; a < members.size() && ok; ++a) {
      for (std::size_t b = a + 1; b < members.size() && ok; ++b) {
        ok = ivs[static_cast<std::size_t>(members[a])].overlaps(
            ivs[static_cast<std::size_t>(members[b])]);
      }
    }
    if (ok && members.size() > best.size()) best = members;
  }
  return best;
}

}  // namespace

TEST_CASE("j test on noiseless valid data accepts with p near one") {
  SimScenario sc = testutil::majority_scenario(500, 3);
  sc.pi_spec = PiSpec::none();
  sc.extras["sigma_delta"] = 0.0;
  sc.extras["sigma_eps"] = 0.0;
  const IVDataset ds = center_and_validate(generate(sc).dataset);
  const JTestResult jt = j_test(ds, all_of(7));
  CHECK(jt.statistic < 1e-6);
  CHECK(jt.p_value > 0.999);
  CHECK(jt.df == 6);
}

TEST_CASE("j test needs overidentification") {
  const IVDataset ds = testutil::random_dataset(4, 60, 3);
  CHECK_THROWS_AS(j_test(ds, {1}), Underidentified);
}

TEST_CASE("j test rejects a strongly invalid instrument in the valid set") {
  int rejected = 0;
  const int seeds = 200;
  for (int s = 0; s < seeds; ++s) {
    SimScenario sc;
    sc.n = 50000;
    sc.p = 3;
    sc.beta = 1.0;
    sc.gamma = (Vec(3) << 0.5, 0.45, 0.55).finished();
    sc.pi_spec = PiSpec::at({{2, 0.5}});
    sc.seed = 900 + static_cast<std::uint64_t>(s);
    const IVDataset ds = center_and_validate(generate(sc).dataset);
    if (j_test(ds, all_of(3)).p_value < 0.05) ++rejected;
  }
  CHECK(rejected >= seeds * 95 / 100);
}

TEST_CASE("downward testing returns the first passing candidate") {
  SimScenario sc = testutil::majority_scenario(20000, 5);
  const GeneratedData gen = generate(sc);
  const IVDataset ds = center_and_validate(gen.dataset);

  // first candidate passes: trivial return
  const auto first = downward_testing({gen.truth.valid_set, {0, 1}}, ds, 0.05);
  CHECK(first.set == gen.truth.valid_set);
  CHECK_FALSE(first.all_rejected);

  // only the smallest passes
  const std::vector<std::vector<int>> candidates = {all_of(7),
                                                    {0, 1, 2, 3, 4},
                                                    gen.truth.valid_set};
  const auto picked = downward_testing(candidates, ds, 0.05);
  CHECK(picked.set == gen.truth.valid_set);

  // none passes: final candidate with the flag
  const auto fallback = downward_testing({all_of(7), {3, 4, 5, 6}}, ds, 0.999999);
  CHECK(fallback.all_rejected);
  CHECK(fallback.set == std::vector<int>{3, 4, 5, 6});

  CHECK_THROWS_AS(downward_testing({}, ds, 0.05), EmptyInput);
}

TEST_CASE("downward testing over path candidates recovers the valid set") {
  int correct = 0;
  const int seeds = 200;
  for (int s = 0; s < seeds; ++s) {
    const SimScenario sc = testutil::majority_scenario(10000, 15000 + s);
    const GeneratedData gen = generate(sc);
    const IVDataset ds = center_and_validate(gen.dataset);
    const LassoPath path = sisvive_path(ds);
    std::vector<std::vector<int>> candidates;
    for (int i = 0; i < path.lambdas.size(); ++i) {
      std::vector<int> v;
      for (int j = 0; j < 7; ++j) {
        if (path.pi_hats(j, i) == 0.0) v.push_back(j);
      }
      if (!v.empty() &&
          std::find(candidates.begin(), candidates.end(), v) == candidates.end()) {
        candidates.push_back(v);
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const auto& a, const auto& b) { return a.size() > b.size(); });
    const auto choice =
        downward_testing(candidates, ds, 0.1 / std::log(10000.0));
    if (choice.set == gen.truth.valid_set) ++correct;
  }
  CHECK(correct >= seeds * 9 / 10);
}

TEST_CASE("voting matrix has unit diagonal and symmetry") {
  const SimScenario sc = testutil::majority_scenario(3000, 8);
  const ReducedFormFit fit =
      fit_reduced_form(center_and_validate(generate(sc).dataset));
  const VotingMatrix vm = build_voting_matrix(fit, 0.05);
  for (Eigen::Index j = 0; j < 7; ++j) {
    CHECK(vm.entries(j, j) == 1);
    for (Eigen::Index k = 0; k < 7; ++k) {
      CHECK(vm.entries(j, k) == vm.entries(k, j));
      CHECK(vm.se_pairs(j, k) == vm.se_pairs(k, j));
    }
  }
}

TEST_CASE("tsht votes on a frozen three-ratio summary example") {
  // ratios (1, 1, 5) with tiny uncertainty: votes (2, 2, 1)
  const std::vector<SummaryRecord> recs{
      {1.0, 1e-4, 1.0, 1e-4}, {1.0, 1e-4, 1.0, 1e-4}, {1.0, 1e-4, 5.0, 1e-4}};
  const ReducedFormFit fit = load_summary_stats(recs);
  const VotingMatrix vm = build_voting_matrix(fit, 0.05);
  CHECK(vm.votes(0) == 2);
  CHECK(vm.votes(1) == 2);
  CHECK(vm.votes(2) == 1);
  const EstimateReport rep = tsht(fit, 0.05);
  CHECK(rep.valid_set == std::vector<int>{0, 1});
  CHECK(rep.beta_hat == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("tsht with identical ratios keeps every instrument") {
  const std::vector<SummaryRecord> recs{
      {0.5, 0.05, 1.0, 0.1}, {0.4, 0.05, 0.8, 0.1}, {0.6, 0.05, 1.2, 0.1}};
  const ReducedFormFit fit = load_summary_stats(recs);
  const VotingMatrix vm = build_voting_matrix(fit, 0.05);
  CHECK(vm.entries.sum() == 9);
  const EstimateReport rep = tsht(fit, 0.05);
  CHECK(rep.valid_set == std::vector<int>{0, 1, 2});
}

TEST_CASE("tsht recovers the valid set under the plurality rule") {
  int correct = 0;
  const int seeds = 200;
  for (int s = 0; s < seeds; ++s) {
    SimScenario sc;
    sc.n = 20000;
    sc.p = 8;
    sc.beta = 1.0;
    sc.gamma = (Vec(8) << 0.5, 0.45, 0.55, 0.5, 0.4, 0.6, 0.5, 0.45).finished();
    // 4 valid, two pairs of invalid at shared violation levels
    sc.pi_spec = PiSpec::at({{4, 0.5}, {5, 0.5}, {6, -0.7}, {7, -0.7}});
    sc.seed = 23000 + static_cast<std::uint64_t>(s);
    const GeneratedData gen = generate(sc);
    const EstimateReport rep = tsht(center_and_validate(gen.dataset), 0.05);
    if (rep.valid_set == gen.truth.valid_set) ++correct;
  }
  CHECK(correct >= seeds * 9 / 10);
}

TEST_CASE("tsht is invariant to instrument relabeling") {
  const SimScenario sc = testutil::majority_scenario(15000, 77);
  const IVDataset ds = center_and_validate(generate(sc).dataset);
  const EstimateReport base = tsht(ds, 0.05);

  // swap columns 0 and 6
  IVDataset permuted = ds;
  permuted.instruments.col(0).swap(permuted.instruments.col(6));
  const EstimateReport swapped = tsht(center_and_validate(permuted), 0.05);
  CHECK(swapped.beta_hat == doctest::Approx(base.beta_hat).epsilon(1e-9));
  auto mapped = *base.valid_set;
  for (int& j : mapped) j = (j == 0) ? 6 : (j == 6 ? 0 : j);
  std::sort(mapped.begin(), mapped.end());
  CHECK(*swapped.valid_set == mapped);
}

TEST_CASE("interval sweep matches hand and brute-force answers") {
  const std::vector<Interval> hand{{0.0, 1.0}, {0.5, 1.5}, {3.0, 4.0}};
  const auto sets = max_overlap_sets(hand);
  REQUIRE(sets.size() == 1);
  CHECK(sets.front() == std::vector<int>{0, 1});

  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(9));  // up to 10 intervals
    std::vector<Interval> ivs;
    for (int i = 0; i < n; ++i) {
      const double a = rng.uniform(-2.0, 2.0);
      const double len = rng.uniform(0.0, 1.5);
      ivs.push_back({a, a + len});
    }
    const auto sweep = max_overlap_sets(ivs);
    const auto brute = max_clique_brute_force(ivs);
    REQUIRE(!sweep.empty());
    CHECK(sweep.front().size() == brute.size());
    bool brute_found = false;
    for (const auto& s : sweep) brute_found = brute_found || s == brute;
    CHECK(brute_found);
  }
}

TEST_CASE("cim keeps everything when all working intervals overlap") {
  SimScenario sc = testutil::majority_scenario(20000, 31);
  sc.pi_spec = PiSpec::none();
  const IVDataset ds = center_and_validate(generate(sc).dataset);
  const EstimateReport rep = cim(ds);
  CHECK(rep.valid_set == std::vector<int>{0, 1, 2, 3, 4, 5, 6});
}

TEST_CASE("cim recovers the valid set and tracks the oracle") {
  int correct = 0;
  const int seeds = 200;
  for (int s = 0; s < seeds; ++s) {
    const SimScenario sc = testutil::majority_scenario(10000, 41000 + s);
    const GeneratedData gen = generate(sc);
    const IVDataset ds = center_and_validate(gen.dataset);
    const EstimateReport rep = cim(ds);
    if (rep.valid_set == gen.truth.valid_set) ++correct;
  }
  CHECK(correct >= seeds * 9 / 10);
}
