#include "ivkit/methods.hpp"

#include <algorithm>
#include <charconv>
#include <set>
#include <sstream>

#include "ivkit/errors.hpp"
#include "ivkit/hetero.hpp"
#include "ivkit/linear.hpp"
#include "ivkit/nonlinear.hpp"
#include "ivkit/selection.hpp"
#include "ivkit/uniform.hpp"

namespace ivkit {

namespace {

struct MethodTraits {
  bool needs_individual = false;
  std::set<std::string> allowed_options;
};

const std::map<std::string, MethodTraits>& registry() {
  static const std::map<std::string, MethodTraits> table = {
      {"ols", {true, {}}},
      {"tsls", {true, {"set"}}},
      {"median", {false, {}}},
      {"kclass", {true, {}}},
      {"sisvive", {true, {"lambda"}}},
      {"adaptive-lasso", {true, {"level"}}},
      {"tsht", {false, {}}},
      {"cim", {true, {"level"}}},
      {"searching", {false, {}}},
      {"sampling", {false, {"m", "c_n", "lambda"}}},
      {"union", {true, {"v", "alpha_s", "alpha_t", "inner"}}},
      {"tsci", {true, {"learner", "split"}}},
      {"g", {true, {"v"}}},
      {"genius", {true, {"variant"}}},
      {"misteri", {true, {}}},
  };
  return table;
}

double parse_number(const MethodSpec& spec, const std::string& key) {
  const std::string& text = spec.options.at(key);
  try {
    std::size_t used = 0;
    const double value = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return value;
  } catch (const std::exception&) {
    throw MethodOptionError("method '" + spec.name + "': option " + key +
                            " = '" + text + "' is not a number");
  }
}

std::vector<int> parse_index_set(const std::string& text, int p) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, '+')) {
    int value = 0;
    const auto res = std::from_chars(item.data(), item.data() + item.size(), value);
    if (res.ec != std::errc() || res.ptr != item.data() + item.size() ||
        value < 1 || value > p) {
      throw MethodOptionError("bad instrument index '" + item +
                              "' (expected 1.." + std::to_string(p) + ")");
    }
    out.push_back(value - 1);
  }
  return out;
}

}  // namespace

std::vector<std::string> registered_methods() {
  std::vector<std::string> names;
  for (const auto& [name, traits] : registry()) names.push_back(name);
  return names;
}

void validate_method_spec(const MethodSpec& spec, bool individual_data,
                          int p_instruments) {
  const auto it = registry().find(spec.name);
  if (it == registry().end()) {
    throw UnknownMethod("no method named '" + spec.name + "'");
  }
  if (it->second.needs_individual && !individual_data) {
    throw MethodOptionError("method '" + spec.name +
                            "' needs individual-level data");
  }
  for (const auto& [key, value] : spec.options) {
    if (key == "label") continue;
    if (!it->second.allowed_options.count(key)) {
      throw MethodOptionError("method '" + spec.name +
                              "' does not accept option '" + key + "'");
    }
  }
  if (spec.name == "union" || spec.name == "g") {
    if (!spec.options.count("v")) {
      throw MethodOptionError("method '" + spec.name + "' needs option v");
    }
    const double v = parse_number(spec, "v");
    if (v < 1 || (p_instruments > 0 && v > p_instruments) ||
        v != std::floor(v)) {
      throw MethodOptionError("method '" + spec.name + "': v out of range");
    }
  }
  if (spec.name == "tsls") {
    if (auto o = spec.options.find("set"); o != spec.options.end()) {
      if (o->second != "all" && o->second != "oracle" && p_instruments > 0) {
        parse_index_set(o->second, p_instruments);
      }
    }
  }
  if (spec.name == "union") {
    if (auto o = spec.options.find("inner"); o != spec.options.end()) {
      if (o->second != "wald" && o->second != "ar" && o->second != "clr") {
        throw MethodOptionError("union inner must be wald, ar, or clr");
      }
    }
  }
  if (spec.name == "tsci") {
    if (auto o = spec.options.find("learner"); o != spec.options.end()) {
      if (o->second != "spline" && o->second != "poly" && o->second != "forest") {
        throw MethodOptionError("tsci learner must be spline, poly, or forest");
      }
    }
  }
  if (spec.name == "genius") {
    if (auto o = spec.options.find("variant"); o != spec.options.end()) {
      if (o->second != "mean" && o->second != "sumsq") {
        throw MethodOptionError("genius variant must be mean or sumsq");
      }
    }
  }
}

MethodResult run_method(const MethodSpec& spec, const MethodInputs& inputs) {
  validate_method_spec(spec, inputs.centered != nullptr, inputs.max_range_p);
  MethodResult result;
  result.label = spec.label();

  const auto opt = [&](const std::string& key) -> std::optional<std::string> {
    const auto it = spec.options.find(key);
    if (it == spec.options.end()) return std::nullopt;
    return it->second;
  };

  try {
    if (spec.name == "ols") {
      result.report = ols_estimator(*inputs.centered, inputs.alpha, inputs.cov_mode);
    } else if (spec.name == "tsls") {
      const std::string set = opt("set").value_or("all");
      std::vector<int> valid;
      if (set == "all") {
        for (int j = 0; j < inputs.centered->p(); ++j) valid.push_back(j);
        result.label = "tsls-all";
      } else if (set == "oracle") {
        if (!inputs.truth) {
          throw MethodOptionError(
              "method 'tsls': set=oracle needs simulation ground truth");
        }
        valid = inputs.truth->valid_set;
        result.label = "tsls-oracle";
      } else {
        valid = parse_index_set(set, static_cast<int>(inputs.centered->p()));
      }
      result.report = tsls(*inputs.centered, valid, inputs.alpha, inputs.cov_mode);
      result.report->method = result.label;
    } else if (spec.name == "median") {
      result.report = median_estimator(*inputs.fit);
    } else if (spec.name == "kclass") {
      result.report = kclass_estimator(*inputs.centered, inputs.alpha);
    } else if (spec.name == "sisvive") {
      SisviveOptions options;
      options.seed = inputs.seed;
      if (opt("lambda")) options.lambda = parse_number(spec, "lambda");
      result.report = sisvive(*inputs.centered, options);
    } else if (spec.name == "adaptive-lasso") {
      AdaptiveLassoOptions options;
      options.alpha = inputs.alpha;
      options.cov_mode = inputs.cov_mode;
      if (opt("level")) options.level = parse_number(spec, "level");
      result.report = adaptive_lasso(*inputs.centered, options);
    } else if (spec.name == "tsht") {
      if (inputs.centered) {
        result.report = tsht(*inputs.centered, inputs.alpha, inputs.cov_mode);
      } else {
        result.report = tsht(*inputs.fit, inputs.alpha);
      }
    } else if (spec.name == "cim") {
      CimOptions options;
      options.alpha = inputs.alpha;
      options.cov_mode = inputs.cov_mode;
      if (opt("level")) options.level = parse_number(spec, "level");
      result.report = cim(*inputs.centered, options);
    } else if (spec.name == "searching") {
      result.interval = searching_ci(*inputs.fit, inputs.alpha).set;
    } else if (spec.name == "sampling") {
      SamplingCiOptions options;
      options.seed = inputs.seed;
      if (opt("m")) options.m = static_cast<int>(parse_number(spec, "m"));
      if (opt("c_n")) options.c_n = parse_number(spec, "c_n");
      if (opt("lambda")) options.lambda_override = parse_number(spec, "lambda");
      const SamplingCiResult sampled = sampling_ci(*inputs.fit, inputs.alpha, options);
      result.interval = sampled.set;
      if (sampled.fallback) result.warnings.push_back("SamplingFellBackToSearching");
    } else if (spec.name == "union") {
      const int v = static_cast<int>(parse_number(spec, "v"));
      const double alpha_s =
          opt("alpha_s") ? parse_number(spec, "alpha_s") : 0.2 * inputs.alpha;
      const double alpha_t = opt("alpha_t") ? parse_number(spec, "alpha_t")
                                            : inputs.alpha - alpha_s;
      InnerCiMethod inner = InnerCiMethod::wald;
      const std::string inner_name = opt("inner").value_or("wald");
      if (inner_name == "ar") inner = InnerCiMethod::anderson_rubin;
      if (inner_name == "clr") inner = InnerCiMethod::clr;
      const UnionCiResult u = union_ci(*inputs.centered, v, alpha_s, alpha_t,
                                       inner, std::nullopt, inputs.cov_mode);
      result.interval = u.set;
      if (u.misspecification_flag) {
        result.warnings.push_back("AllSubsetsRejected");
      }
    } else if (spec.name == "tsci") {
      TsciOptions options;
      options.alpha = inputs.alpha;
      options.seed = inputs.seed;
      const std::string learner = opt("learner").value_or("spline");
      if (learner == "poly") options.learner = TsciLearner::polynomial;
      if (learner == "forest") options.learner = TsciLearner::random_forest;
      if (opt("split")) options.split_fraction = parse_number(spec, "split");
      result.report = tsci(*inputs.centered, options);
    } else if (spec.name == "g") {
      const int v = static_cast<int>(parse_number(spec, "v"));
      GInteractionOptions options;
      options.alpha = inputs.alpha;
      result.report = g_interaction(*inputs.centered, v, options);
      result.report->method = result.label;
    } else if (spec.name == "genius") {
      GeniusOptions options;
      options.alpha = inputs.alpha;
      if (opt("variant").value_or("mean") == "sumsq") {
        options.variant = GeniusVariant::sumsq;
      }
      result.report = genius(*inputs.centered, options);
    } else if (spec.name == "misteri") {
      MisteriOptions options;
      options.alpha = inputs.alpha;
      options.seed = inputs.seed;
      result.report = misteri_fit(*inputs.raw, options);
    }
  } catch (const Error& e) {
    result.error = e.what();
    return result;
  }

  if (result.report) {
    result.report->method = result.label;
    for (const std::string& w : result.report->warnings) {
      result.warnings.push_back(w);
    }
  }
  return result;
}

}  // namespace ivkit
