#pragma once

// Flat JSON experiment configs, fully resolved with defaults, and the
// run/sweep drivers behind the command-line tool.

#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lts/common.hpp"
#include "lts/dataset.hpp"
#include "lts/report.hpp"
#include "lts/strategies.hpp"

namespace lts {

enum class ConfigMode { Run, Sweep };

struct ExperimentConfig {
  std::optional<std::string> dataset_csv;
  std::string label_column = "label";
  std::optional<std::vector<std::string>> feature_columns;
  std::vector<GaussianCluster> synthetic;
  std::uint64_t synthetic_seed = 0;

  std::vector<std::string> strategies{"XG+LTS"};
  std::optional<double> budget_pct;
  std::optional<std::size_t> budget;
  std::vector<double> budget_ladder_pct;
  std::size_t iterations = 20;
  double alpha = 1.0;
  ScheduleMode schedule = ScheduleMode::Equal;

  RunOptions options{};
  SplitConfig split{};
  std::uint64_t seed = 0;
  std::size_t repeats = 1;
  std::vector<std::uint64_t> seeds;  // resolved
  double target_fm = 0.9;
  std::size_t threads = 1;
};

namespace detail {

template <class T>
T get_as(const nlohmann::json& j, const char* key) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw DataError(std::string("config: key '") + key + "' has the wrong type");
  }
}

inline std::uint64_t get_uint(const nlohmann::json& j, const char* key) {
  if (!j.is_number_integer() || (!j.is_number_unsigned() && j.get<std::int64_t>() < 0)) throw DataError(std::string("config: key '") + key + "' must be a non-negative integer");
  return j.get<std::uint64_t>();
}

inline double get_real(const nlohmann::json& j, const char* key) {
  if (!j.is_number()) throw DataError(std::string("config: key '") + key + "' must be a number");
  return j.get<double>();
}

inline bool get_bool(const nlohmann::json& j, const char* key) {
  if (!j.is_boolean()) throw DataError(std::string("config: key '") + key + "' must be true or false");
  return j.get<bool>();
}

}  // namespace detail

inline GaussianCluster parse_cluster(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("synthetic: each cluster must be an object");
  GaussianCluster c;
  bool has_mean = false, has_class = false, has_count = false;
  for (const auto& [key, v] : j.items()) {
    if (key == "mean") {
      if (!v.is_array()) throw DataError("synthetic: 'mean' must be an array");
      for (const auto& x : v) c.mean.push_back(detail::get_real(x, "mean"));
      has_mean = true;
    } else if (key == "stddev") {
      c.stddev = detail::get_real(v, "stddev");
    } else if (key == "class") {
      if (v.is_string()) c.label = v.get<std::string>();
      else if (v.is_number_integer()) c.label = std::to_string(v.get<long long>());
      else throw DataError("synthetic: 'class' must be a string or integer");
      has_class = true;
    } else if (key == "count") {
      c.count = detail::get_uint(v, "count");
      has_count = true;
    } else {
      throw DataError("synthetic: unknown cluster key '" + key + "'");
    }
  }
  if (!has_mean || !has_class || !has_count) throw DataError("synthetic: cluster needs 'mean', 'class' and 'count'");
  return c;
}

inline std::vector<GaussianCluster> parse_clusters(const nlohmann::json& j) {
  const nlohmann::json* list = &j;
  if (j.is_object()) {
    for (const auto& [key, v] : j.items())
      if (key != "clusters") throw DataError("synthetic spec: unknown key '" + key + "'");
    if (!j.contains("clusters")) throw DataError("synthetic spec: missing 'clusters'");
    list = &j.at("clusters");
  }
  if (!list->is_array()) throw DataError("synthetic spec: clusters must be an array");
  std::vector<GaussianCluster> out;
  for (const auto& c : *list) out.push_back(parse_cluster(c));
  return out;
}

inline nlohmann::json clusters_to_json(const std::vector<GaussianCluster>& clusters) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : clusters)
    arr.push_back({{"mean", c.mean}, {"stddev", c.stddev}, {"class", c.label}, {"count", c.count}});
  return arr;
}

inline const char* schedule_name(ScheduleMode m) { return m == ScheduleMode::Equal ? "equal" : "exponential"; }

/// Parses a flat config; unknown keys are rejected.
inline ExperimentConfig parse_config(const nlohmann::json& j, ConfigMode mode) {
  using namespace detail;
  if (!j.is_object()) throw DataError("config: top level must be a JSON object");
  ExperimentConfig c;
  c.repeats = mode == ConfigMode::Sweep ? 10 : 1;
  std::optional<std::vector<std::uint64_t>> explicit_seeds;
  auto& o = c.options;

  for (const auto& [key, v] : j.items()) {
    const char* k = key.c_str();
    if (key == "dataset_csv") c.dataset_csv = get_as<std::string>(v, k);
    else if (key == "label_column") c.label_column = get_as<std::string>(v, k);
    else if (key == "feature_columns") c.feature_columns = get_as<std::vector<std::string>>(v, k);
    else if (key == "synthetic") c.synthetic = parse_clusters(v);
    else if (key == "synthetic_seed") c.synthetic_seed = get_uint(v, k);
    else if (key == "strategies") c.strategies = get_as<std::vector<std::string>>(v, k);
    else if (key == "budget_pct") c.budget_pct = get_real(v, k);
    else if (key == "budget") c.budget = get_uint(v, k);
    else if (key == "budget_ladder_pct") c.budget_ladder_pct = get_as<std::vector<double>>(v, k);
    else if (key == "iterations") c.iterations = get_uint(v, k);
    else if (key == "alpha") c.alpha = get_real(v, k);
    else if (key == "schedule") {
      const auto s = get_as<std::string>(v, k);
      if (s == "equal") c.schedule = ScheduleMode::Equal;
      else if (s == "exponential") c.schedule = ScheduleMode::Exponential;
      else throw DataError("config: schedule must be 'equal' or 'exponential'");
    }
    else if (key == "rounds_per_iteration") o.boost.rounds_per_iteration = get_uint(v, k);
    else if (key == "learning_rate") o.boost.learning_rate = get_real(v, k);
    else if (key == "max_depth") o.boost.reg.max_depth = get_uint(v, k);
    else if (key == "lambda") o.boost.reg.lambda = get_real(v, k);
    else if (key == "gamma") o.boost.reg.gamma = get_real(v, k);
    else if (key == "min_child_weight") o.boost.reg.min_child_weight = get_real(v, k);
    else if (key == "regressor_rounds") o.regressor.rounds = get_uint(v, k);
    else if (key == "regressor_learning_rate") o.regressor.learning_rate = get_real(v, k);
    else if (key == "regressor_max_depth") o.regressor.reg.max_depth = get_uint(v, k);
    else if (key == "regressor_lambda") o.regressor.reg.lambda = get_real(v, k);
    else if (key == "regressor_min_child_weight") o.regressor.reg.min_child_weight = get_real(v, k);
    else if (key == "test_fraction") c.split.test_fraction = get_real(v, k);
    else if (key == "split_seed") c.split.rng_seed = get_uint(v, k);
    else if (key == "seed") c.seed = get_uint(v, k);
    else if (key == "repeats") c.repeats = get_uint(v, k);
    else if (key == "seeds") explicit_seeds = get_as<std::vector<std::uint64_t>>(v, k);
    else if (key == "target_fm") c.target_fm = get_real(v, k);
    else if (key == "negate_weight_exponent") o.weights.negate_exponent = get_bool(v, k);
    else if (key == "rescale_z_by_q") o.weights.rescale_targets = get_bool(v, k);
    else if (key == "retrain_from_scratch") o.retrain_from_scratch = get_bool(v, k);
    else if (key == "max_groups") o.max_groups = get_uint(v, k);
    else if (key == "threads") c.threads = get_uint(v, k);
    else throw DataError("config: unknown key '" + key + "'");
  }
  o.schedule = c.schedule;
  o.regressor.reg.gamma = 0.0;

  if (c.dataset_csv.has_value() == !c.synthetic.empty())
    throw DataError("config: give exactly one of 'dataset_csv' or 'synthetic'");
  if (c.strategies.empty()) throw DataError("config: 'strategies' is empty");
  for (const auto& s : c.strategies) Strategy::parse(s, c.alpha);
  if (!(c.alpha >= 0.0) || std::isinf(c.alpha)) throw DataError("config: alpha must be a finite number >= 0");
  if (c.iterations == 0) throw DataError("config: iterations must be >= 1");
  if (mode == ConfigMode::Run) {
    if (c.budget_pct.has_value() == c.budget.has_value())
      throw DataError("config: give exactly one of 'budget_pct' or 'budget'");
    if (!c.budget_ladder_pct.empty()) throw DataError("config: 'budget_ladder_pct' belongs to sweep configs");
  } else {
    if (c.budget_ladder_pct.empty()) throw DataError("config: sweep needs 'budget_ladder_pct'");
    if (c.budget_pct || c.budget) throw DataError("config: sweep takes its budgets from 'budget_ladder_pct'");
  }
  if (c.repeats == 0) throw DataError("config: repeats must be >= 1");
  if (explicit_seeds) {
    if (explicit_seeds->empty()) throw DataError("config: 'seeds' is empty");
    c.seeds = *explicit_seeds;
    c.repeats = c.seeds.size();
  } else {
    for (std::size_t i = 0; i < c.repeats; ++i) c.seeds.push_back(c.seed + i);
  }
  if (c.threads == 0) c.threads = 1;
  return c;
}

inline ExperimentConfig load_config(const std::string& path, ConfigMode mode) {
  std::ifstream in(path);
  if (!in) throw DataError("config: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("config: ") + e.what());
  }
  return parse_config(j, mode);
}

/// Every key with its resolved value, defaults included.
inline nlohmann::json resolved_config(const ExperimentConfig& c) {
  const auto& o = c.options;
  nlohmann::json j = {
      {"label_column", c.label_column},
      {"strategies", c.strategies},
      {"iterations", c.iterations},
      {"alpha", c.alpha},
      {"schedule", schedule_name(c.schedule)},
      {"rounds_per_iteration", o.boost.rounds_per_iteration},
      {"learning_rate", o.boost.learning_rate},
      {"max_depth", o.boost.reg.max_depth},
      {"lambda", o.boost.reg.lambda},
      {"gamma", o.boost.reg.gamma},
      {"min_child_weight", o.boost.reg.min_child_weight},
      {"regressor_rounds", o.regressor.rounds},
      {"regressor_learning_rate", o.regressor.learning_rate},
      {"regressor_max_depth", o.regressor.reg.max_depth},
      {"regressor_lambda", o.regressor.reg.lambda},
      {"regressor_min_child_weight", o.regressor.reg.min_child_weight},
      {"test_fraction", c.split.test_fraction},
      {"split_seed", c.split.rng_seed},
      {"seed", c.seed},
      {"repeats", c.repeats},
      {"seeds", c.seeds},
      {"target_fm", c.target_fm},
      {"negate_weight_exponent", o.weights.negate_exponent},
      {"rescale_z_by_q", o.weights.rescale_targets},
      {"retrain_from_scratch", o.retrain_from_scratch},
      {"max_groups", o.max_groups},
      {"threads", c.threads},
  };
  if (c.dataset_csv) j["dataset_csv"] = *c.dataset_csv;
  if (c.feature_columns) j["feature_columns"] = *c.feature_columns;
  if (!c.synthetic.empty()) {
    j["synthetic"] = clusters_to_json(c.synthetic);
    j["synthetic_seed"] = c.synthetic_seed;
  }
  if (c.budget_pct) j["budget_pct"] = *c.budget_pct;
  if (c.budget) j["budget"] = *c.budget;
  if (!c.budget_ladder_pct.empty()) j["budget_ladder_pct"] = c.budget_ladder_pct;
  return j;
}

/// Loaded dataset, train side, and the held-out evaluation for a config.
struct ExperimentData {
  Pool full;
  TrainTestSplit split;
  Evaluation eval;
};

inline ExperimentData prepare_data(const ExperimentConfig& c) {
  Pool full = c.dataset_csv ? load_csv(*c.dataset_csv, c.label_column, c.feature_columns)
                            : gen_synthetic(c.synthetic, c.synthetic_seed);
  TrainTestSplit split = split_train_test(full, c.split);
  Evaluation eval{split.test_ids, full.data().minority_class()};
  return {std::move(full), std::move(split), std::move(eval)};
}

/// Every configured strategy for every seed at one budget.
inline Report run_experiment(const ExperimentConfig& c) {
  const ExperimentData d = prepare_data(c);
  const std::size_t n_all = d.full.size();
  const std::size_t budget = c.budget ? *c.budget : budget_from_pct(*c.budget_pct, n_all);
  const double pct = c.budget_pct ? *c.budget_pct : 100.0 * static_cast<double>(budget) / static_cast<double>(n_all);
  if (budget < c.iterations) throw ContractError("budget is smaller than the iteration count");

  Report report;
  report.config = resolved_config(c);
  report.seeds = c.seeds;
  for (const auto& name : c.strategies) {
    const Strategy s = Strategy::parse(name, c.alpha);
    for (std::uint64_t seed : c.seeds) {
      RunResult res = run_strategy(s, d.split.train, budget, c.iterations, c.options, seed, &d.eval);
      report.runs.push_back({s.name(), pct, budget, seed, std::move(res.trace)});
    }
  }
  return report;
}

inline Report sweep_experiment(const ExperimentConfig& c) {
  const ExperimentData d = prepare_data(c);
  SweepSpec spec;
  for (const auto& name : c.strategies) spec.strategies.push_back(Strategy::parse(name, c.alpha));
  spec.ladder_pct = c.budget_ladder_pct;
  spec.seeds = c.seeds;
  spec.target_fm = c.target_fm;
  spec.iterations = c.iterations;
  spec.options = c.options;
  spec.threads = c.threads;
  SweepOutput out = budget_sweep(d.split.train, d.full.size(), spec, d.eval);

  Report report;
  report.config = resolved_config(c);
  report.seeds = c.seeds;
  report.runs = std::move(out.runs);
  report.sweep = std::move(out.result);
  return report;
}

}  // namespace lts
