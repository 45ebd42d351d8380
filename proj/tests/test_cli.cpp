#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lts/lts.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "lts_cli_test";

int bench(const std::string& args) {
  const std::string cmd = std::string("\"") + LTS_BENCH_PATH + "\" " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path write_json(const std::string& name, const nlohmann::json& j) {
  fs::create_directories(kWork);
  const auto p = kWork / name;
  std::ofstream(p) << j.dump(2);
  return p;
}

nlohmann::json clusters() {
  return {{"clusters",
           {{{"mean", {0.0, 0.0}}, {"stddev", 1.0}, {"class", "neg"}, {"count", 160}},
            {{"mean", {5.0, 5.0}}, {"stddev", 1.0}, {"class", "pos"}, {"count", 40}}}}};
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST(Cli, GenSynthIsDeterministicWithExactCounts) {
  const auto spec = write_json("clusters.json", clusters());
  ASSERT_EQ(bench("gen-synth --config " + spec.string() + " --out " + (kWork / "a.csv").string() + " --seed 4"), 0);
  ASSERT_EQ(bench("gen-synth --config " + spec.string() + " --out " + (kWork / "b.csv").string() + " --seed 4"), 0);
  ASSERT_EQ(bench("gen-synth --config " + spec.string() + " --out " + (kWork / "c.csv").string() + " --seed 5"), 0);
  const auto a = slurp(kWork / "a.csv");
  EXPECT_EQ(a, slurp(kWork / "b.csv"));
  EXPECT_NE(a, slurp(kWork / "c.csv"));
  EXPECT_EQ(lines(a), 201u);
  const auto pool = lts::load_csv((kWork / "a.csv").string(), "label");
  EXPECT_EQ(pool.data().class_counts(), (std::vector<std::size_t>{160, 40}));
}

TEST(Cli, GenSynthRejectsSingleClass) {
  auto one = clusters();
  one["clusters"][1]["class"] = "neg";
  const auto spec = write_json("one.json", one);
  EXPECT_EQ(bench("gen-synth --config " + spec.string() + " --out " + (kWork / "one.csv").string()), 2);
}

TEST(Cli, RunWritesStableReport) {
  const auto spec = write_json("clusters2.json", clusters());
  const auto csv = kWork / "pool.csv";
  ASSERT_EQ(bench("gen-synth --config " + spec.string() + " --out " + csv.string()), 0);
  const auto cfg = write_json("run.json", {{"dataset_csv", csv.string()},
                                           {"strategies", {"XG+LTS", "XG+RS"}},
                                           {"budget_pct", 10},
                                           {"iterations", 5},
                                           {"repeats", 2}});
  const auto out1 = kWork / "run1", out2 = kWork / "run2";
  fs::remove_all(out1);
  fs::remove_all(out2);
  ASSERT_EQ(bench("run --config " + cfg.string() + " --out " + out1.string()), 0);
  ASSERT_EQ(bench("run --config " + cfg.string() + " --out " + out2.string()), 0);
  // 2 strategies x 2 seeds x 5 iterations
  EXPECT_EQ(lines(slurp(out1 / "runs.csv")), 1u + 20u);
  for (const char* f : {"report.json", "runs.csv", "selections.csv"}) EXPECT_EQ(slurp(out1 / f), slurp(out2 / f)) << f;
  const auto report = lts::read_report(out1 / "report.json");
  EXPECT_EQ(report.config["budget_pct"], 10.0);
  EXPECT_EQ(report.seeds, (std::vector<std::uint64_t>{0, 1}));
  EXPECT_EQ(report.runs[0].trace.back().consumed_budget, 20u);

  const auto out3 = kWork / "run3";
  ASSERT_EQ(bench("run --config " + cfg.string() + " --out " + out3.string() + " --seed 10"), 0);
  EXPECT_EQ(lts::read_report(out3 / "report.json").seeds, (std::vector<std::uint64_t>{10, 11}));
}

TEST(Cli, SweepWithTwoStrategies) {
  const auto cfg = write_json("sweep.json", {{"synthetic", clusters()["clusters"]},
                                             {"strategies", {"XG+RS", "XG+LTS"}},
                                             {"budget_ladder_pct", {5, 10, 15, 20}},
                                             {"iterations", 4},
                                             {"repeats", 2},
                                             {"target_fm", 0.8}});
  const auto out = kWork / "sweep";
  fs::remove_all(out);
  ASSERT_EQ(bench("sweep --config " + cfg.string() + " --out " + out.string() + " --threads 2"), 0);
  EXPECT_EQ(lines(slurp(out / "sweep.csv")), 1u + 8u);
  EXPECT_EQ(lines(slurp(out / "sweep_summary.csv")), 1u + 2u);
  const auto report = lts::read_report(out / "report.json");
  ASSERT_TRUE(report.sweep.has_value());
  EXPECT_EQ(report.sweep->strategies, (std::vector<std::string>{"XG+RS", "XG+LTS:1"}));
  EXPECT_EQ(report.runs.size(), 16u);
}

TEST(Cli, BadInputsExitWithDiagnostic) {
  const auto typo = write_json("typo.json", {{"synthetic", clusters()["clusters"]}, {"budgte", 10}});
  EXPECT_EQ(bench("run --config " + typo.string() + " --out " + (kWork / "x").string()), 2);
  EXPECT_EQ(bench("run --config " + (kWork / "missing.json").string() + " --out " + (kWork / "x").string()), 2);
  const auto big = write_json("big.json", {{"synthetic", clusters()["clusters"]}, {"budget", 100000}});
  EXPECT_EQ(bench("run --config " + big.string() + " --out " + (kWork / "x").string()), 2);
  EXPECT_NE(bench("frobnicate"), 0);
  EXPECT_NE(bench("run --out x"), 0);
}
