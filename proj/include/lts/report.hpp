#pragma once

// Budget sweeps and report emission (JSON summary plus flat CSVs).

#include <atomic>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "lts/common.hpp"
#include "lts/metrics.hpp"
#include "lts/strategies.hpp"

namespace lts {

inline constexpr int kReportSchemaVersion = 1;

struct RunRecord {
  std::string strategy;
  double budget_pct = 0.0;
  std::size_t budget = 0;
  std::uint64_t seed = 0;
  std::vector<IterationTrace> trace;

  bool operator==(const RunRecord&) const = default;
};

struct SweepCell {
  std::string strategy;
  double budget_pct = 0.0;
  std::size_t budget = 0;
  std::size_t runs = 0;
  double fm_mean = 0.0;
  double fm_std = 0.0;
  double accuracy_mean = 0.0;
  double accuracy_std = 0.0;
  double precision_mean = 0.0;
  double recall_mean = 0.0;

  bool operator==(const SweepCell&) const = default;
};

struct SweepResult {
  std::vector<double> ladder_pct;
  double target_fm = 0.9;
  std::vector<std::string> strategies;
  std::vector<SweepCell> cells;  // strategy-major, ladder order within
  std::vector<std::optional<double>> minimal_budget_pct;  // per strategy; empty = not reached

  const SweepCell& cell(std::size_t strategy, std::size_t rung) const {
    return cells.at(strategy * ladder_pct.size() + rung);
  }
  bool operator==(const SweepResult&) const = default;
};

struct Report {
  int schema_version = kReportSchemaVersion;
  nlohmann::json config = nlohmann::json::object();
  std::vector<std::uint64_t> seeds;
  std::vector<RunRecord> runs;
  std::optional<SweepResult> sweep;

  bool operator==(const Report&) const = default;
};

// ---------------------------------------------------------------------------
// JSON mapping
// ---------------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const MetricsSnapshot& m) {
  j = {{"accuracy", m.accuracy}, {"precision", m.precision}, {"recall", m.recall}, {"fm", m.fm},
       {"tp", m.tp}, {"fp", m.fp}, {"fn", m.fn}, {"tn", m.tn}, {"positive", m.positive},
       {"class_precision", m.class_precision}, {"class_recall", m.class_recall}};
}
inline void from_json(const nlohmann::json& j, MetricsSnapshot& m) {
  j.at("accuracy").get_to(m.accuracy);
  j.at("precision").get_to(m.precision);
  j.at("recall").get_to(m.recall);
  j.at("fm").get_to(m.fm);
  j.at("tp").get_to(m.tp);
  j.at("fp").get_to(m.fp);
  j.at("fn").get_to(m.fn);
  j.at("tn").get_to(m.tn);
  j.at("positive").get_to(m.positive);
  j.at("class_precision").get_to(m.class_precision);
  j.at("class_recall").get_to(m.class_recall);
}

inline void to_json(nlohmann::json& j, const SelectedSample& s) {
  j = {{"id", s.id}, {"group", s.group}, {"score", s.score}, {"gain", s.gain}};
}
inline void from_json(const nlohmann::json& j, SelectedSample& s) {
  j.at("id").get_to(s.id);
  j.at("group").get_to(s.group);
  j.at("score").get_to(s.score);
  j.at("gain").get_to(s.gain);
}

inline void to_json(nlohmann::json& j, const IterationTrace& t) {
  j = {{"iteration", t.iteration}, {"labeled_count", t.labeled_count}, {"consumed_budget", t.consumed_budget},
       {"train_loss", t.train_loss}, {"added", t.added}};
  j["metrics"] = t.metrics ? nlohmann::json(*t.metrics) : nlohmann::json(nullptr);
  j["weight_sum"] = t.weight_sum ? nlohmann::json(*t.weight_sum) : nlohmann::json(nullptr);
}
inline void from_json(const nlohmann::json& j, IterationTrace& t) {
  j.at("iteration").get_to(t.iteration);
  j.at("labeled_count").get_to(t.labeled_count);
  j.at("consumed_budget").get_to(t.consumed_budget);
  j.at("train_loss").get_to(t.train_loss);
  j.at("added").get_to(t.added);
  t.metrics = j.at("metrics").is_null() ? std::nullopt : std::optional(j.at("metrics").get<MetricsSnapshot>());
  t.weight_sum = j.at("weight_sum").is_null() ? std::nullopt : std::optional(j.at("weight_sum").get<double>());
}

inline void to_json(nlohmann::json& j, const RunRecord& r) {
  j = {{"strategy", r.strategy}, {"budget_pct", r.budget_pct}, {"budget", r.budget}, {"seed", r.seed},
       {"trace", r.trace}};
}
inline void from_json(const nlohmann::json& j, RunRecord& r) {
  j.at("strategy").get_to(r.strategy);
  j.at("budget_pct").get_to(r.budget_pct);
  j.at("budget").get_to(r.budget);
  j.at("seed").get_to(r.seed);
  j.at("trace").get_to(r.trace);
}

inline void to_json(nlohmann::json& j, const SweepCell& c) {
  j = {{"strategy", c.strategy}, {"budget_pct", c.budget_pct}, {"budget", c.budget}, {"runs", c.runs},
       {"fm_mean", c.fm_mean}, {"fm_std", c.fm_std}, {"accuracy_mean", c.accuracy_mean},
       {"accuracy_std", c.accuracy_std}, {"precision_mean", c.precision_mean}, {"recall_mean", c.recall_mean}};
}
inline void from_json(const nlohmann::json& j, SweepCell& c) {
  j.at("strategy").get_to(c.strategy);
  j.at("budget_pct").get_to(c.budget_pct);
  j.at("budget").get_to(c.budget);
  j.at("runs").get_to(c.runs);
  j.at("fm_mean").get_to(c.fm_mean);
  j.at("fm_std").get_to(c.fm_std);
  j.at("accuracy_mean").get_to(c.accuracy_mean);
  j.at("accuracy_std").get_to(c.accuracy_std);
  j.at("precision_mean").get_to(c.precision_mean);
  j.at("recall_mean").get_to(c.recall_mean);
}

inline void to_json(nlohmann::json& j, const SweepResult& s) {
  nlohmann::json minimal = nlohmann::json::array();
  for (std::size_t i = 0; i < s.strategies.size(); ++i) {
    const auto& m = s.minimal_budget_pct[i];
    minimal.push_back({{"strategy", s.strategies[i]},
                       {"minimal_budget_pct", m ? nlohmann::json(*m) : nlohmann::json("not reached")}});
  }
  j = {{"ladder_pct", s.ladder_pct}, {"target_fm", s.target_fm}, {"strategies", s.strategies},
       {"cells", s.cells}, {"minimal_budget", std::move(minimal)}};
}
inline void from_json(const nlohmann::json& j, SweepResult& s) {
  j.at("ladder_pct").get_to(s.ladder_pct);
  j.at("target_fm").get_to(s.target_fm);
  j.at("strategies").get_to(s.strategies);
  j.at("cells").get_to(s.cells);
  s.minimal_budget_pct.clear();
  for (const auto& m : j.at("minimal_budget")) {
    const auto& v = m.at("minimal_budget_pct");
    s.minimal_budget_pct.push_back(v.is_number() ? std::optional(v.get<double>()) : std::nullopt);
  }
}

inline void to_json(nlohmann::json& j, const Report& r) {
  j = {{"schema_version", r.schema_version}, {"config", r.config}, {"seeds", r.seeds}, {"runs", r.runs}};
  j["sweep"] = r.sweep ? nlohmann::json(*r.sweep) : nlohmann::json(nullptr);
}
inline void from_json(const nlohmann::json& j, Report& r) {
  j.at("schema_version").get_to(r.schema_version);
  r.config = j.at("config");
  j.at("seeds").get_to(r.seeds);
  j.at("runs").get_to(r.runs);
  r.sweep = j.at("sweep").is_null() ? std::nullopt : std::optional(j.at("sweep").get<SweepResult>());
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

/// Label count for a budget given as a percentage of |X|.
inline std::size_t budget_from_pct(double pct, std::size_t dataset_size) {
  require(pct > 0.0 && std::isfinite(pct), "budget percentage must be > 0");
  return static_cast<std::size_t>(std::llround(pct / 100.0 * static_cast<double>(dataset_size)));
}

struct SweepSpec {
  std::vector<Strategy> strategies;
  std::vector<double> ladder_pct;
  std::vector<std::uint64_t> seeds;
  double target_fm = 0.9;
  std::size_t iterations = 20;
  RunOptions options{};
  std::size_t threads = 1;
};

struct SweepOutput {
  SweepResult result;
  std::vector<RunRecord> runs;  // (strategy, rung, seed) order
};

inline double sample_stddev(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

/// Runs every (strategy, budget, seed) cell independently on `train`, then
/// folds the final-iteration metrics in (strategy, budget, seed) order.
/// Budgets are percentages of `dataset_size` (|X|).
inline SweepOutput budget_sweep(const Pool& train, std::size_t dataset_size, const SweepSpec& spec,
                                const Evaluation& eval) {
  require(!spec.strategies.empty(), "sweep needs at least one strategy");
  require(!spec.ladder_pct.empty(), "sweep needs a budget ladder");
  require(!spec.seeds.empty(), "sweep needs at least one seed");
  require(!eval.test_ids.empty(), "sweep needs held-out instances");
  std::vector<std::size_t> budgets;
  for (std::size_t i = 0; i < spec.ladder_pct.size(); ++i) {
    if (i > 0 && !(spec.ladder_pct[i] > spec.ladder_pct[i - 1]))
      throw ContractError("budget ladder must be strictly increasing");
    const std::size_t b = budget_from_pct(spec.ladder_pct[i], dataset_size);
    if (b > train.size()) throw ContractError("budget ladder entry exceeds the training pool");
    if (b < spec.iterations) throw ContractError("budget ladder entry is smaller than the iteration count");
    budgets.push_back(b);
  }

  const std::size_t ns = spec.strategies.size(), nb = budgets.size(), nr = spec.seeds.size();
  std::vector<RunRecord> runs(ns * nb * nr);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t cell = next++; cell < runs.size(); cell = next++) {
      const std::size_t si = cell / (nb * nr), bi = (cell / nr) % nb, ri = cell % nr;
      const auto& s = spec.strategies[si];
      RunResult res = run_strategy(s, train, budgets[bi], spec.iterations, spec.options, spec.seeds[ri], &eval);
      runs[cell] = {s.name(), spec.ladder_pct[bi], budgets[bi], spec.seeds[ri], std::move(res.trace)};
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(spec.threads, runs.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  SweepOutput out;
  auto& r = out.result;
  r.ladder_pct = spec.ladder_pct;
  r.target_fm = spec.target_fm;
  for (std::size_t si = 0; si < ns; ++si) {
    r.strategies.push_back(spec.strategies[si].name());
    std::optional<double> minimal;
    for (std::size_t bi = 0; bi < nb; ++bi) {
      std::vector<double> fm, acc, prec, rec;
      for (std::size_t ri = 0; ri < nr; ++ri) {
        const auto& m = *runs[(si * nb + bi) * nr + ri].trace.back().metrics;
        fm.push_back(m.fm);
        acc.push_back(m.accuracy);
        prec.push_back(m.precision);
        rec.push_back(m.recall);
      }
      auto mean = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
      };
      SweepCell c{r.strategies.back(), spec.ladder_pct[bi], budgets[bi], nr, mean(fm), 0.0, mean(acc), 0.0,
                  mean(prec), mean(rec)};
      c.fm_std = sample_stddev(fm, c.fm_mean);
      c.accuracy_std = sample_stddev(acc, c.accuracy_mean);
      if (!minimal && c.fm_mean >= spec.target_fm) minimal = spec.ladder_pct[bi];
      r.cells.push_back(std::move(c));
    }
    r.minimal_budget_pct.push_back(minimal);
  }
  out.runs = std::move(runs);
  return out;
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

namespace detail {

inline std::string num(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::ofstream open_for_write(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + p.string() + "'");
  return out;
}

}  // namespace detail

/// One row per iteration per run.
inline void write_runs_csv(std::ostream& out, const std::vector<RunRecord>& runs) {
  using detail::num;
  out << "strategy,budget_pct,seed,iteration,labeled_count,accuracy,precision,recall,fm\n";
  for (const auto& r : runs)
    for (const auto& t : r.trace) {
      out << r.strategy << ',' << num(r.budget_pct) << ',' << r.seed << ',' << t.iteration << ',' << t.labeled_count;
      if (t.metrics)
        out << ',' << num(t.metrics->accuracy) << ',' << num(t.metrics->precision) << ',' << num(t.metrics->recall)
            << ',' << num(t.metrics->fm);
      else
        out << ",,,,";
      out << '\n';
    }
}

inline void write_selections_csv(std::ostream& out, const std::vector<RunRecord>& runs) {
  using detail::num;
  out << "strategy,budget_pct,seed,iteration,id,group,score,gain\n";
  for (const auto& r : runs)
    for (const auto& t : r.trace)
      for (const auto& s : t.added)
        out << r.strategy << ',' << num(r.budget_pct) << ',' << r.seed << ',' << t.iteration << ',' << s.id << ','
            << s.group << ',' << num(s.score) << ',' << num(s.gain) << '\n';
}

inline void write_sweep_csv(std::ostream& out, const SweepResult& s) {
  using detail::num;
  out << "strategy,budget_pct,budget,runs,fm_mean,fm_std,accuracy_mean,accuracy_std,precision_mean,recall_mean\n";
  for (const auto& c : s.cells)
    out << c.strategy << ',' << num(c.budget_pct) << ',' << c.budget << ',' << c.runs << ',' << num(c.fm_mean) << ','
        << num(c.fm_std) << ',' << num(c.accuracy_mean) << ',' << num(c.accuracy_std) << ','
        << num(c.precision_mean) << ',' << num(c.recall_mean) << '\n';
}

inline void write_sweep_summary_csv(std::ostream& out, const SweepResult& s) {
  out << "strategy,target_fm,minimal_budget_pct\n";
  for (std::size_t i = 0; i < s.strategies.size(); ++i)
    out << s.strategies[i] << ',' << detail::num(s.target_fm) << ','
        << (s.minimal_budget_pct[i] ? detail::num(*s.minimal_budget_pct[i]) : std::string("not reached")) << '\n';
}

inline std::string report_json_text(const Report& r) { return nlohmann::json(r).dump(2) + "\n"; }

/// Writes report.json, runs.csv, selections.csv and, with a sweep,
/// sweep.csv and sweep_summary.csv into `dir`. Output is byte-stable.
inline void emit_report(const Report& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create '" + dir.string() + "': " + ec.message());
  detail::open_for_write(dir / "report.json") << report_json_text(report);
  {
    auto out = detail::open_for_write(dir / "runs.csv");
    write_runs_csv(out, report.runs);
  }
  {
    auto out = detail::open_for_write(dir / "selections.csv");
    write_selections_csv(out, report.runs);
  }
  if (report.sweep) {
    auto out = detail::open_for_write(dir / "sweep.csv");
    write_sweep_csv(out, *report.sweep);
    auto summary = detail::open_for_write(dir / "sweep_summary.csv");
    write_sweep_summary_csv(summary, *report.sweep);
  }
}

inline Report read_report(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot read '" + file.string() + "'");
  return nlohmann::json::parse(in).get<Report>();
}

}  // namespace lts
