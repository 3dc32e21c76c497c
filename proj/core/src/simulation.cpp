#include "ivkit/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ivkit/csv.hpp"
#include "ivkit/errors.hpp"
#include "ivkit/methods.hpp"
#include "ivkit/parallel.hpp"
#include "ivkit/rng.hpp"

namespace ivkit {

namespace {

double extra_or(const SimScenario& sc, const std::string& key, double fallback) {
  const auto it = sc.extras.find(key);
  return it == sc.extras.end() ? fallback : it->second;
}

Vec resolve_gamma(const SimScenario& sc) {
  if (sc.gamma.size() == sc.p) return sc.gamma;
  if (sc.gamma.size() != 0) {
    throw InvalidScenario("gamma length disagrees with p");
  }
  Rng rng(derive_seed(sc.seed, 0xA11CE));
  Vec gamma(sc.p);
  for (Eigen::Index j = 0; j < sc.p; ++j) gamma(j) = rng.uniform(0.3, 0.6);
  return gamma;
}

Vec resolve_pi(const SimScenario& sc, const Vec& gamma) {
  Vec pi = Vec::Zero(sc.p);
  switch (sc.pi_spec.kind) {
    case PiSpec::Kind::explicit_values:
      for (const auto& [idx, value] : sc.pi_spec.values) {
        if (idx < 0 || idx >= sc.p) {
          throw InvalidScenario("pi index out of range");
        }
        pi(idx) = value;
      }
      break;
    case PiSpec::Kind::local_drift: {
      if (sc.pi_spec.drift.size() != sc.p) {
        throw InvalidScenario("local drift vector length disagrees with p");
      }
      pi = sc.pi_spec.drift / std::sqrt(static_cast<double>(sc.n));
      break;
    }
    case PiSpec::Kind::orthogonal: {
      Rng rng(derive_seed(sc.seed ^ sc.pi_spec.orthogonal_seed, 0x0471));
      const double g2 = gamma.squaredNorm();
      for (int attempt = 0; attempt < 16; ++attempt) {
        Vec u(sc.p);
        for (Eigen::Index j = 0; j < sc.p; ++j) u(j) = rng.normal();
        Vec perp = u - gamma * (u.dot(gamma) / g2);
        const double norm = perp.norm();
        if (norm > 1e-8) {
          pi = perp * (sc.pi_spec.orthogonal_scale / norm);
          break;
        }
      }
      break;
    }
  }
  return pi;
}

}  // namespace

GeneratedData generate(const SimScenario& sc) {
  if (sc.p < 1 || sc.n < sc.p + 2) {
    throw InvalidScenario("need p >= 1 and n >= p + 2");
  }
  if (!(sc.confounding > -1.0 && sc.confounding < 1.0)) {
    throw InvalidScenario("confounding correlation must lie in (-1, 1)");
  }
  if (sc.z_distribution != "normal" && sc.z_distribution != "rademacher") {
    throw InvalidScenario("z_distribution must be 'normal' or 'rademacher'");
  }

  const Vec gamma = resolve_gamma(sc);
  const Vec pi = resolve_pi(sc, gamma);
  const Eigen::Index n = sc.n;
  const Eigen::Index p = sc.p;

  Rng z_rng(derive_seed(sc.seed, 0x2));
  Mat z(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) {
      z(i, j) = sc.z_distribution == "normal" ? z_rng.normal()
                                              : z_rng.rademacher();
    }
  }

  Rng e_rng(derive_seed(sc.seed, 0x3));
  const double rho = sc.confounding;
  const double sigma_delta = extra_or(sc, "sigma_delta", 1.0);
  const double sigma_eps = extra_or(sc, "sigma_eps", 1.0);

  IVDataset data;
  data.instruments = z;
  data.exposure.resize(n);
  data.outcome.resize(n);

  switch (sc.family) {
    case ScenarioFamily::linear:
    case ScenarioFamily::local_violation:
    case ScenarioFamily::nonlinear: {
      const double f_quad =
          extra_or(sc, "f_quad", sc.family == ScenarioFamily::nonlinear ? 0.5 : 0.0);
      const double f_prod = extra_or(sc, "f_prod", 0.0);
      if (f_prod != 0.0 && p < 2) {
        throw InvalidScenario("interaction term needs p >= 2");
      }
      for (Eigen::Index i = 0; i < n; ++i) {
        const double u1 = e_rng.normal();
        const double u2 = e_rng.normal();
        const double delta = sigma_delta * u1;
        const double eps =
            sigma_eps * (rho * u1 + std::sqrt(1.0 - rho * rho) * u2);
        double f = z.row(i).dot(gamma);
        if (f_quad != 0.0) f += f_quad * (z(i, 0) * z(i, 0) - 1.0);
        if (f_prod != 0.0) f += f_prod * z(i, 0) * z(i, 1);
        data.exposure(i) = f + delta;
        data.outcome(i) = sc.beta * data.exposure(i) + z.row(i).dot(pi) + eps;
      }
      break;
    }
    case ScenarioFamily::hetero_genius: {
      Vec theta = Vec::Zero(p);
      theta(0) = extra_or(sc, "theta1", 0.5);
      for (Eigen::Index j = 1; j < p; ++j) {
        theta(j) = extra_or(sc, "theta" + std::to_string(j + 1), 0.0);
      }
      for (Eigen::Index i = 0; i < n; ++i) {
        const double u = e_rng.normal();
        const double nu = e_rng.normal();
        const double eps0 = e_rng.normal();
        const double het_sd = std::exp(0.5 * z.row(i).dot(theta));
        data.exposure(i) = z.row(i).dot(gamma) + rho * u + het_sd * nu;
        data.outcome(i) = sc.beta * data.exposure(i) + z.row(i).dot(pi) +
                          rho * u + sigma_eps * eps0;
      }
      break;
    }
    case ScenarioFamily::misteri: {
      const double beta0 = extra_or(sc, "beta0", 0.2);
      const double alpha = extra_or(sc, "m_alpha", 0.5);
      const double eta0 = extra_or(sc, "eta0", -0.3);
      Vec eta = Vec::Zero(p);
      eta(0) = extra_or(sc, "eta1", 0.5);
      for (Eigen::Index j = 1; j < p; ++j) {
        eta(j) = extra_or(sc, "eta" + std::to_string(j + 1), 0.0);
      }
      for (Eigen::Index i = 0; i < n; ++i) {
        const double delta = sigma_delta * e_rng.normal();
        const double xi = e_rng.normal();
        data.exposure(i) = z.row(i).dot(gamma) + delta;
        const double s = eta0 + z.row(i).dot(eta);
        const double v = std::exp(s);
        data.outcome(i) = beta0 + sc.beta * data.exposure(i) + z.row(i).dot(pi) +
                          alpha * data.exposure(i) * v + std::sqrt(v) * xi;
      }
      break;
    }
  }

  GeneratedData out;
  out.dataset = std::move(data);
  out.truth.beta = sc.beta;
  out.truth.pi = pi;
  out.truth.gamma = gamma;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (pi(j) == 0.0) out.truth.valid_set.push_back(static_cast<int>(j));
  }
  return out;
}

std::vector<OracleSolution> identification_oracle(const Vec& Gamma, const Vec& gamma,
                                                  IdentificationRule rule,
                                                  double tolerance) {
  const Eigen::Index p = Gamma.size();
  if (gamma.size() != p) throw DimensionMismatch("coefficient lengths disagree");
  if (p < 1 || p > 12) throw InvalidArgument("oracle supports 1 <= p <= 12");
  for (Eigen::Index j = 0; j < p; ++j) {
    if (std::abs(gamma(j)) <= 1e-12) {
      throw ZeroFirstStage("oracle needs nonzero first-stage coefficients");
    }
  }

  // group instruments by ratio (sorted scan; a gap > tolerance starts a group)
  std::vector<int> order(static_cast<std::size_t>(p));
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> ratio(static_cast<std::size_t>(p));
  for (Eigen::Index j = 0; j < p; ++j) {
    ratio[static_cast<std::size_t>(j)] = Gamma(j) / gamma(j);
  }
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return ratio[static_cast<std::size_t>(a)] <
                                       ratio[static_cast<std::size_t>(b)]; });
  std::vector<std::vector<int>> groups;
  for (int j : order) {
    if (!groups.empty() &&
        std::abs(ratio[static_cast<std::size_t>(j)] -
                 ratio[static_cast<std::size_t>(groups.back().back())]) <= tolerance) {
      groups.back().push_back(j);
    } else {
      groups.push_back({j});
    }
  }

  std::size_t max_size = 0;
  for (const auto& g : groups) max_size = std::max(max_size, g.size());

  auto make_solution = [&](const std::vector<int>& group) {
    OracleSolution sol;
    double sum = 0.0;
    for (int j : group) sum += ratio[static_cast<std::size_t>(j)];
    sol.beta = sum / static_cast<double>(group.size());
    sol.pi = Gamma - sol.beta * gamma;
    for (int j : group) sol.pi(j) = 0.0;
    sol.valid_set = group;
    std::sort(sol.valid_set.begin(), sol.valid_set.end());
    return sol;
  };

  std::vector<OracleSolution> solutions;
  for (const auto& group : groups) {
    bool admissible = false;
    switch (rule) {
      case IdentificationRule::majority:
        admissible = 2 * group.size() > static_cast<std::size_t>(p);
        break;
      case IdentificationRule::plurality:
        admissible = group.size() == max_size;
        break;
      case IdentificationRule::andrews: {
        // subset enumeration: the candidate fails when some other index set
        // of at least its size has direct effects proportional to the
        // first-stage coefficients (a rival common ratio).
        const OracleSolution cand = make_solution(group);
        admissible = true;
        const int full = 1 << p;
        for (int mask = 1; mask < full && admissible; ++mask) {
          const int size = __builtin_popcount(static_cast<unsigned>(mask));
          if (size < static_cast<int>(group.size())) continue;
          std::vector<int> subset;
          for (int j = 0; j < p; ++j) {
            if (mask & (1 << j)) subset.push_back(j);
          }
          if (subset == cand.valid_set) continue;
          bool proportional = true;
          double q = 0.0;
          bool q_set = false;
          for (int j : subset) {
            const double qj = cand.pi(j) / gamma(j);
            if (!q_set) {
              q = qj;
              q_set = true;
            } else if (std::abs(qj - q) > tolerance) {
              proportional = false;
              break;
            }
          }
          if (proportional && std::abs(q) > tolerance) admissible = false;
        }
        break;
      }
    }
    if (admissible) solutions.push_back(make_solution(group));
  }
  return solutions;
}

std::string MethodSpec::label() const {
  if (auto it = options.find("label"); it != options.end()) return it->second;
  std::string out = name;
  if (auto it = options.find("set"); it != options.end() && it->second != "all") {
    out += "-" + it->second;
  }
  if (auto it = options.find("v"); it != options.end()) {
    out += "(" + it->second + ")";
  }
  if (auto it = options.find("variant");
      it != options.end() && it->second != "mean") {
    out += "-" + it->second;
  }
  return out;
}

MethodSpec MethodSpec::parse(const std::string& text) {
  MethodSpec spec;
  const auto colon = text.find(':');
  spec.name = text.substr(0, colon);
  if (colon == std::string::npos) return spec;
  std::string rest = text.substr(colon + 1);
  std::stringstream ss(rest);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) {
      throw MethodOptionError("expected key=value in method options: " + item);
    }
    spec.options[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return spec;
}

std::string ExperimentTable::to_csv() const {
  std::string out = "method,bias,rmse,coverage,med_length,selection_acc\n";
  for (const ExperimentRow& row : rows) {
    out += row.method;
    out += ',';
    out += format_double(row.bias);
    out += ',';
    out += format_double(row.rmse);
    out += ',';
    if (row.coverage) out += format_double(*row.coverage);
    out += ',';
    if (row.med_length) out += format_double(*row.med_length);
    out += ',';
    if (row.selection_accuracy) out += format_double(*row.selection_accuracy);
    out += '\n';
  }
  return out;
}

namespace {

double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

struct RepOutcome {
  bool ran = false;
  bool failed = false;
  std::optional<double> beta;
  std::optional<bool> covered;
  std::optional<double> length;
  std::optional<bool> selection_ok;
};

}  // namespace

ExperimentTable run_experiment(const SimScenario& scenario,
                               const std::vector<MethodSpec>& methods, int reps,
                               int jobs) {
  if (reps < 1) throw InvalidArgument("run_experiment needs reps >= 1");
  for (const MethodSpec& spec : methods) {
    validate_method_spec(spec, /*individual_data=*/true,
                         static_cast<int>(scenario.p));
  }

  const auto n_methods = methods.size();
  std::vector<std::vector<RepOutcome>> grid(
      static_cast<std::size_t>(reps), std::vector<RepOutcome>(n_methods));

  parallel_for(0, reps, jobs, [&](int rep) {
    SimScenario sc = scenario;
    sc.seed = derive_seed(scenario.seed, static_cast<std::uint64_t>(rep));
    const GeneratedData gen = generate(sc);
    const IVDataset centered = center_and_validate(gen.dataset);
    const ReducedFormFit fit = fit_reduced_form(centered, CovMode::robust);

    MethodInputs inputs;
    inputs.raw = &gen.dataset;
    inputs.centered = &centered;
    inputs.fit = &fit;
    inputs.truth = gen.truth;
    inputs.max_range_p = static_cast<int>(scenario.p);

    for (std::size_t m = 0; m < n_methods; ++m) {
      inputs.seed = derive_seed(sc.seed, 1000 + static_cast<std::uint64_t>(m));
      RepOutcome& out = grid[static_cast<std::size_t>(rep)][m];
      out.ran = true;
      const MethodResult result = run_method(methods[m], inputs);
      if (result.failed()) {
        out.failed = true;
        continue;
      }
      const IntervalUnion* ci = nullptr;
      if (result.report) {
        out.beta = result.report->beta_hat;
        if (result.report->ci) ci = &*result.report->ci;
        if (result.report->valid_set) {
          out.selection_ok = (*result.report->valid_set == gen.truth.valid_set);
        }
      }
      if (result.interval) ci = &*result.interval;
      if (ci) {
        out.covered = ci->contains(gen.truth.beta);
        out.length = ci->total_length();
      }
    }
  });

  ExperimentTable table;
  for (std::size_t m = 0; m < n_methods; ++m) {
    ExperimentRow row;
    row.method = methods[m].label();
    std::vector<double> betas;
    std::vector<double> lengths;
    int covered = 0;
    int with_ci = 0;
    int sel_ok = 0;
    int with_sel = 0;
    for (int rep = 0; rep < reps; ++rep) {
      const RepOutcome& out = grid[static_cast<std::size_t>(rep)][m];
      if (out.failed) {
        ++row.n_failed;
        continue;
      }
      ++row.n_success;
      if (out.beta) betas.push_back(*out.beta);
      if (out.covered) {
        ++with_ci;
        if (*out.covered) ++covered;
      }
      if (out.length) lengths.push_back(*out.length);
      if (out.selection_ok) {
        ++with_sel;
        if (*out.selection_ok) ++sel_ok;
      }
    }
    if (!betas.empty()) {
      double mean = 0.0;
      for (double b : betas) mean += b;
      mean /= static_cast<double>(betas.size());
      row.bias = mean - scenario.beta;
      double mse = 0.0;
      for (double b : betas) mse += (b - scenario.beta) * (b - scenario.beta);
      row.rmse = std::sqrt(mse / static_cast<double>(betas.size()));
    } else {
      row.bias = std::numeric_limits<double>::quiet_NaN();
      row.rmse = std::numeric_limits<double>::quiet_NaN();
    }
    if (with_ci > 0) {
      row.coverage = static_cast<double>(covered) / static_cast<double>(with_ci);
      row.med_length = median_of(lengths);
    }
    if (with_sel > 0) {
      row.selection_accuracy =
          static_cast<double>(sel_ok) / static_cast<double>(with_sel);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace ivkit
