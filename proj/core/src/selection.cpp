#include "ivkit/selection.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "ivkit/errors.hpp"
#include "ivkit/linear.hpp"
#include "ivkit/stats.hpp"

namespace ivkit {

JTestResult j_test(const IVDataset& dataset, const std::vector<int>& valid_set,
                   CovMode cov_mode) {
  if (valid_set.size() < 2) {
    throw Underidentified("j_test needs at least two valid instruments");
  }
  const CrossProducts cp = CrossProducts::from(dataset);
  const TslsSolution sol = tsls_solve(cp, valid_set);
  const Eigen::Index p = cp.p();

  // Z'u from cross products.
  Vec ztu = cp.zty - sol.beta * cp.ztd;
  for (std::size_t a = 0; a < sol.controls.size(); ++a) {
    ztu -= sol.control_coefs(static_cast<Eigen::Index>(a)) *
           cp.ztz.col(sol.controls[a]);
  }

  JTestResult result;
  result.df = static_cast<int>(valid_set.size()) - 1;
  const double scale = std::max({cp.yty, cp.dtd, 1.0});
  if (sol.rss <= 1e-22 * scale) {
    // Numerically perfect fit: no overidentifying evidence.
    result.statistic = 0.0;
    result.p_value = 1.0;
    return result;
  }

  if (cov_mode == CovMode::homoskedastic) {
    const Eigen::LDLT<Mat> ztz(cp.ztz);
    const double quad = ztu.dot(ztz.solve(ztu));
    result.statistic = quad / sol.sigma2;
  } else {
    const Vec u = dataset.outcome - sol.beta * dataset.exposure -
                  [&]() {
                    Vec zc = Vec::Zero(dataset.n());
                    for (std::size_t a = 0; a < sol.controls.size(); ++a) {
                      zc += sol.control_coefs(static_cast<Eigen::Index>(a)) *
                            dataset.instruments.col(sol.controls[a]);
                    }
                    return zc;
                  }();
    const Mat zu = dataset.instruments.array().colwise() * u.array();
    const Mat meat = (zu.transpose() * zu) / static_cast<double>(cp.n);
    const Vec g = ztu / static_cast<double>(cp.n);
    const Eigen::LDLT<Mat> meat_ldlt(meat);
    if (meat_ldlt.info() != Eigen::Success) {
      result.statistic = 0.0;
      result.p_value = 1.0;
      return result;
    }
    result.statistic = static_cast<double>(cp.n) * g.dot(meat_ldlt.solve(g));
  }
  result.statistic = std::max(result.statistic, 0.0);
  result.p_value = stats::chi2_sf(result.statistic, result.df);
  return result;
}

DownwardTestingResult downward_testing(
    const std::vector<std::vector<int>>& candidates, const IVDataset& dataset,
    double level, CovMode cov_mode) {
  if (candidates.empty()) {
    throw EmptyInput("downward_testing needs at least one candidate set");
  }
  DownwardTestingResult result;
  for (const auto& candidate : candidates) {
    if (candidate.size() < 2) continue;
    const JTestResult jt = j_test(dataset, candidate, cov_mode);
    if (jt.p_value > level) {
      result.set = candidate;
      result.p_value = jt.p_value;
      return result;
    }
  }
  result.set = candidates.back();
  result.p_value = 0.0;
  result.all_rejected = true;
  return result;
}

VotingMatrix build_voting_matrix(const ReducedFormFit& fit, double alpha) {
  fit.require_nonzero_first_stage();
  const Eigen::Index p = fit.p();
  VotingMatrix vm;
  vm.threshold_quantile =
      stats::normal_quantile(1.0 - alpha / (2.0 * static_cast<double>(p)));
  vm.entries.setZero(p, p);
  vm.se_pairs = Mat::Zero(p, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    vm.entries(j, j) = 1;
    for (Eigen::Index k = j + 1; k < p; ++k) {
      const double se = fit.ratio_diff_se(j, k);
      vm.se_pairs(j, k) = se;
      vm.se_pairs(k, j) = se;
      const int agree =
          std::abs(fit.ratio(j) - fit.ratio(k)) <= vm.threshold_quantile * se
              ? 1
              : 0;
      vm.entries(j, k) = agree;
      vm.entries(k, j) = agree;
    }
  }
  return vm;
}

namespace {

std::vector<int> tsht_selection(const ReducedFormFit& fit, double alpha,
                                VotingMatrix* out_vm) {
  const VotingMatrix vm = build_voting_matrix(fit, alpha);
  const Eigen::Index p = fit.p();
  int max_votes = 0;
  for (Eigen::Index j = 0; j < p; ++j) {
    max_votes = std::max(max_votes, vm.votes(j));
  }
  std::vector<int> selected;
  for (Eigen::Index j = 0; j < p; ++j) {
    const int votes = vm.votes(j);
    if (2 * votes > p || votes == max_votes) {
      selected.push_back(static_cast<int>(j));
    }
  }
  if (out_vm) *out_vm = vm;
  return selected;
}

void attach_tsht_diagnostics(EstimateReport& report, const ReducedFormFit& fit,
                             const VotingMatrix& vm) {
  for (Eigen::Index j = 0; j < fit.p(); ++j) {
    report.diagnostics["votes_" + std::to_string(j + 1)] =
        static_cast<double>(vm.votes(j));
  }
  report.diagnostics["vote_threshold"] = vm.threshold_quantile;
  double min_strength = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < fit.p(); ++j) {
    min_strength =
        std::min(min_strength, std::abs(fit.gamma_hat(j)) / fit.se_gamma(j));
  }
  report.diagnostics["min_first_stage_t"] = min_strength;
  if (min_strength < 2.0) report.warnings.push_back("WeakInstrumentSignal");
}

}  // namespace

EstimateReport tsht(const IVDataset& dataset, double alpha, CovMode cov_mode) {
  const ReducedFormFit fit = fit_reduced_form(dataset, cov_mode);
  VotingMatrix vm;
  const std::vector<int> selected = tsht_selection(fit, alpha, &vm);
  EstimateReport report = tsls(dataset, selected, alpha, cov_mode);
  report.method = "tsht";
  attach_tsht_diagnostics(report, fit, vm);
  if (!std::isnan(fit.first_stage_f)) {
    report.diagnostics["first_stage_f"] = fit.first_stage_f;
  }
  return report;
}

EstimateReport tsht(const ReducedFormFit& fit, double alpha) {
  VotingMatrix vm;
  const std::vector<int> selected = tsht_selection(fit, alpha, &vm);
  EstimateReport report = summary_iv_estimate(fit, selected, alpha);
  report.method = "tsht";
  attach_tsht_diagnostics(report, fit, vm);
  return report;
}

std::vector<std::vector<int>> max_overlap_sets(
    const std::vector<Interval>& intervals) {
  // Endpoint sweep: +1 at a lower endpoint, -1 at an upper endpoint, lower
  // events first at ties (closed intervals). The stabbing points with the
  // maximal count identify the maximal pairwise-overlapping sets.
  struct Event {
    double x;
    int kind;  // 0 = open (lower), 1 = close (upper)
  };
  const int n = static_cast<int>(intervals.size());
  std::vector<Event> events;
  events.reserve(2 * static_cast<std::size_t>(n));
  for (const Interval& iv : intervals) {
    events.push_back({iv.lower, 0});
    events.push_back({iv.upper, 1});
  }
  std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    return a.x < b.x || (a.x == b.x && a.kind < b.kind);
  });

  int depth = 0;
  int best = 0;
  std::vector<double> stab_points;
  for (const Event& e : events) {
    if (e.kind == 0) {
      ++depth;
      if (depth > best) {
        best = depth;
        stab_points.clear();
      }
      if (depth == best) stab_points.push_back(e.x);
    } else {
      --depth;
    }
  }

  std::vector<std::vector<int>> sets;
  for (double x : stab_points) {
    std::vector<int> members;
    for (int i = 0; i < n; ++i) {
      if (intervals[static_cast<std::size_t>(i)].contains(x)) members.push_back(i);
    }
    if (std::find(sets.begin(), sets.end(), members) == sets.end()) {
      sets.push_back(std::move(members));
    }
  }
  return sets;
}

EstimateReport cim(const IVDataset& dataset, const CimOptions& options) {
  const ReducedFormFit fit = fit_reduced_form(dataset, options.cov_mode);
  fit.require_nonzero_first_stage();
  const Eigen::Index p = fit.p();

  std::vector<double> q_grid;
  if (options.q_grid) {
    q_grid = *options.q_grid;
  } else {
    const double lo = stats::normal_quantile(0.6);
    const double hi = stats::normal_quantile(
        1.0 - 0.025 / (static_cast<double>(p) * static_cast<double>(p)));
    constexpr int kGridSize = 30;
    for (int i = 0; i < kGridSize; ++i) {
      q_grid.push_back(lo + (hi - lo) * static_cast<double>(i) / (kGridSize - 1));
    }
  }
  if (q_grid.empty()) throw InvalidArgument("cim q grid is empty");

  std::vector<double> ratios(static_cast<std::size_t>(p));
  std::vector<double> ses(static_cast<std::size_t>(p));
  for (Eigen::Index j = 0; j < p; ++j) {
    ratios[static_cast<std::size_t>(j)] = fit.ratio(j);
    ses[static_cast<std::size_t>(j)] = fit.ratio_se(j);
  }

  // One candidate set per grid point; cluster-size ties broken by the
  // smaller J statistic (singletons cannot be J-tested and lose ties).
  std::vector<std::vector<int>> candidates;
  std::map<std::vector<int>, double> chosen_q;
  for (double q : q_grid) {
    std::vector<Interval> working(static_cast<std::size_t>(p));
    for (Eigen::Index j = 0; j < p; ++j) {
      const auto i = static_cast<std::size_t>(j);
      working[i] = Interval{ratios[i] - q * ses[i], ratios[i] + q * ses[i]};
    }
    std::vector<std::vector<int>> clusters = max_overlap_sets(working);
    std::vector<int> pick;
    if (clusters.size() == 1) {
      pick = clusters.front();
    } else {
      double best_stat = std::numeric_limits<double>::infinity();
      for (const auto& cluster : clusters) {
        double stat = std::numeric_limits<double>::infinity();
        if (cluster.size() >= 2) {
          stat = j_test(dataset, cluster, options.cov_mode).statistic;
        }
        if (stat < best_stat || pick.empty()) {
          best_stat = stat;
          pick = cluster;
        }
      }
    }
    if (pick.empty()) continue;
    if (std::find(candidates.begin(), candidates.end(), pick) == candidates.end()) {
      candidates.push_back(pick);
      chosen_q.emplace(pick, q);
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const auto& a, const auto& b) { return a.size() > b.size(); });

  const double n = static_cast<double>(dataset.n());
  const double level = options.level ? *options.level : 0.1 / std::log(n);
  const DownwardTestingResult choice =
      downward_testing(candidates, dataset, level, options.cov_mode);

  EstimateReport report = tsls(dataset, choice.set, options.alpha, options.cov_mode);
  report.method = "cim";
  report.diagnostics["downward_level"] = level;
  report.diagnostics["downward_p_value"] = choice.p_value;
  if (auto it = chosen_q.find(choice.set); it != chosen_q.end()) {
    report.diagnostics["q"] = it->second;
  }
  if (!std::isnan(fit.first_stage_f)) {
    report.diagnostics["first_stage_f"] = fit.first_stage_f;
  }
  if (choice.all_rejected) report.warnings.push_back("AllCandidatesRejected");
  return report;
}

}  // namespace ivkit
