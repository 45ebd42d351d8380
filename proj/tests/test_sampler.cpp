#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "lts/sampler.hpp"
#include "oracles.hpp"

using namespace lts;

namespace {

// Partition with explicit group ids for ids 0..n-1.
GroupPartition manual_partition(const std::vector<int>& group_of) {
  GroupPartition p;
  p.group_of = group_of;
  int max_g = -1;
  for (int g : group_of) max_g = std::max(max_g, g);
  p.group_sizes.assign(static_cast<std::size_t>(max_g + 1), 0);
  for (int g : group_of)
    if (g >= 0) ++p.group_sizes[static_cast<std::size_t>(g)];
  return p;
}

std::vector<InstanceId> iota_ids(std::size_t n) {
  std::vector<InstanceId> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

std::shared_ptr<const Dataset> line_data(std::size_t n) {
  std::vector<double> x;
  std::vector<ClassLabel> y;
  for (std::size_t i = 0; i < n; ++i) {
    x.push_back(static_cast<double>(i));
    y.push_back(static_cast<ClassLabel>(i % 2));
  }
  return std::make_shared<const Dataset>(Dataset(1, x, y, {"a", "b"}));
}

std::vector<std::size_t> group_counts(const std::vector<InstanceId>& ids, const GroupPartition& p) {
  std::vector<std::size_t> c(p.group_count(), 0);
  for (InstanceId id : ids) ++c[static_cast<std::size_t>(p.group(id))];
  return c;
}

}  // namespace

// --- schedules ---------------------------------------------------------------

TEST(Schedule, EqualSplitOfLargeBudget) {
  const auto s = make_schedule(100000, 20, ScheduleMode::Equal);
  ASSERT_EQ(s.sizes.size(), 20u);
  for (auto v : s.sizes) EXPECT_EQ(v, 5000u);
}

TEST(Schedule, EqualRemainderGoesLast) {
  const auto s = make_schedule(103, 4, ScheduleMode::Equal);
  EXPECT_EQ(s.sizes, (std::vector<std::size_t>{25, 25, 25, 28}));
}

TEST(Schedule, SingleIteration) {
  EXPECT_EQ(make_schedule(77, 1, ScheduleMode::Equal).sizes, (std::vector<std::size_t>{77}));
  EXPECT_EQ(make_schedule(77, 1, ScheduleMode::Exponential).sizes, (std::vector<std::size_t>{77}));
}

TEST(Schedule, ExponentialHalving) {
  // floor(100/2) = 50, floor(100/4) = 25, floor(100/8) = 12, rest 13.
  EXPECT_EQ(make_schedule(100, 4, ScheduleMode::Exponential).sizes, (std::vector<std::size_t>{50, 25, 12, 13}));
}

TEST(Schedule, ExponentialTightBudgetKeepsEveryBatchNonEmpty) {
  EXPECT_EQ(make_schedule(5, 5, ScheduleMode::Exponential).sizes, (std::vector<std::size_t>{1, 1, 1, 1, 1}));
  EXPECT_EQ(make_schedule(8, 5, ScheduleMode::Exponential).sizes, (std::vector<std::size_t>{4, 1, 1, 1, 1}));
}

TEST(Schedule, BudgetBelowIterationsIsRejected) {
  EXPECT_THROW(make_schedule(3, 4, ScheduleMode::Equal), ContractError);
  EXPECT_THROW(make_schedule(3, 0, ScheduleMode::Equal), ContractError);
}

TEST(Schedule, ConservationOnRandomPairs) {
  Rng rng(99);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 1 + uniform_index(rng, 60);
    const std::size_t budget = n + uniform_index(rng, 200000);
    for (auto mode : {ScheduleMode::Equal, ScheduleMode::Exponential}) {
      const auto s = make_schedule(budget, n, mode);
      ASSERT_EQ(s.sizes.size(), n);
      EXPECT_EQ(s.total(), budget);
      for (auto v : s.sizes) EXPECT_GE(v, 1u);
    }
  }
}

// --- l2,1 --------------------------------------------------------------------

TEST(L21, EvenSpreadAcrossFourGroups) {
  const std::vector<std::size_t> c = {6, 6, 6, 6};
  EXPECT_NEAR(l21_norm(c), 9.8, 0.05);
}

TEST(L21, AllInOneGroup) {
  const std::vector<std::size_t> c = {24, 0, 0, 0};
  EXPECT_NEAR(l21_norm(c), 4.9, 0.05);
}

TEST(L21, EmptySelection) {
  EXPECT_EQ(l21_norm(SelectionState{}), 0.0);
}

// --- seeds -------------------------------------------------------------------

TEST(SelectSeed, OnePerGroup) {
  const auto p = manual_partition({0, 0, 1, 1, 2, 2, 3, 3});
  const auto ids = iota_ids(8);
  const auto seed = select_seed(p, ids, 4, 1);
  EXPECT_EQ(group_counts(seed, p), (std::vector<std::size_t>{1, 1, 1, 1}));
}

TEST(SelectSeed, UnevenGroupsMatchBruteForce) {
  std::vector<int> g(11, 0);
  g[10] = 1;
  const auto p = manual_partition(g);
  const auto seed = select_seed(p, iota_ids(11), 3, 2);
  const auto counts = group_counts(seed, p);
  EXPECT_EQ(counts, (std::vector<std::size_t>{2, 1}));
  EXPECT_NEAR(l21_norm(counts), oracle::best_l21({10, 1}, 3), 1e-12);
  EXPECT_GT(std::sqrt(2.0) + 1.0, std::sqrt(3.0));
}

TEST(SelectSeed, SaturationTakesEverything) {
  const auto p = manual_partition({0, 1, 1, 2, 2, 2});
  const auto seed = select_seed(p, iota_ids(6), 6, 3);
  EXPECT_EQ(std::set<InstanceId>(seed.begin(), seed.end()).size(), 6u);
}

TEST(SelectSeed, ZeroAndOversized) {
  const auto p = manual_partition({0, 1});
  EXPECT_TRUE(select_seed(p, iota_ids(2), 0, 0).empty());
  EXPECT_THROW(select_seed(p, iota_ids(2), 3, 0), ContractError);
  EXPECT_THROW(select_seed(p, std::vector<InstanceId>{}, 1, 0), ContractError);
}

TEST(SelectSeed, BalancedAndOptimalOnRandomGroups) {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t groups = 1 + uniform_index(rng, 4);
    std::vector<int> g;
    std::vector<std::size_t> sizes(groups, 0);
    const std::size_t n = groups + uniform_index(rng, 9);
    for (std::size_t i = 0; i < n; ++i) {
      const auto k = i < groups ? i : uniform_index(rng, groups);
      g.push_back(static_cast<int>(k));
      ++sizes[k];
    }
    const auto p = manual_partition(g);
    const std::size_t m = 1 + uniform_index(rng, std::min<std::size_t>(n, 5));
    const auto seed = select_seed(p, iota_ids(n), m, static_cast<std::uint64_t>(trial));
    ASSERT_EQ(seed.size(), m);
    const auto counts = group_counts(seed, p);
    EXPECT_NEAR(l21_norm(counts), oracle::best_l21(sizes, m), 1e-12);
  }
}

TEST(SelectSeed, DeterministicForSeed) {
  const auto p = manual_partition(std::vector<int>(50, 0));
  EXPECT_EQ(select_seed(p, iota_ids(50), 5, 8), select_seed(p, iota_ids(50), 5, 8));
  EXPECT_NE(select_seed(p, iota_ids(50), 5, 8), select_seed(p, iota_ids(50), 5, 9));
}

// --- uncertainty set ---------------------------------------------------------

TEST(UncertaintySet, FirstIterationIsUniform) {
  auto data = line_data(4);
  const auto ids = iota_ids(4);
  const std::vector<double> z = {0.1, 0.2, 0.3, 0.4};
  const auto a = build_uncertainty_set(1, ids, z, {}, ids, nullptr, *data);
  for (const auto& e : a.entries) EXPECT_NEAR(e.weight, 0.25, 1e-15);
  EXPECT_NEAR(a.weight_sum(), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(a.entries[3].target, 0.4);
}

TEST(UncertaintySet, EpsilonHalfLeavesOnlyNormalisation) {
  auto data = line_data(3);
  UncertaintySet prev{1, {{0, 0.3, 0.3, 0.7}, {1, 0.7, 0.7, 0.3}}};  // sum z = 1, |T| = 2
  const Regressor g(1.0, 0.1, {});
  const std::vector<InstanceId> t = {0, 1, 2};
  const std::vector<InstanceId> fresh = {2};
  const auto a = build_uncertainty_set(2, t, std::vector<double>{0.2, 0.3, 0.5}, prev, fresh, &g, *data);
  EXPECT_NEAR(a.entries[0].weight, 0.7 / 2.0, 1e-15);
  EXPECT_NEAR(a.entries[1].weight, 0.3 / 2.0, 1e-15);
  EXPECT_NEAR(a.entries[2].weight, 1.0 / 2.0, 1e-15);
}

TEST(UncertaintySet, ZeroProductKeepsMultiplierOne) {
  auto data = line_data(3);
  UncertaintySet prev{1, {{0, 0.0, 0.0, 0.5}, {1, 1.0, 1.0, 0.5}}};  // eps = 1/2 ... use raw z = 0 for id 0
  prev.entries[1].z = 0.1;  // eps = 0.05, sample 0 still has z = 0
  const Regressor g(1.0, 0.1, {});
  const std::vector<InstanceId> t = {0, 1};
  const auto a = build_uncertainty_set(2, t, std::vector<double>{0.5, 0.5}, prev, {}, &g, *data);
  const double m1 = std::exp(-0.5 * std::log(0.95 / 0.05) * 1.0 * 0.1);
  EXPECT_NEAR(a.entries[0].weight, 0.5 / (0.5 + 0.5 * m1), 1e-15);
  EXPECT_NEAR(a.entries[1].weight, 0.5 * m1 / (0.5 + 0.5 * m1), 1e-15);
}

TEST(UncertaintySet, QuarterEpsilonMultiplier) {
  // |T|=4, softmax targets 0.25 each (eps = 1/4), g = 1: each carried weight is
  // multiplied by exp(-1/2 ln 3 * 0.25) = 3^(-1/8).
  const double multiplier = 0.87168554287173568296;  // 40-digit reference
  auto data = line_data(5);
  UncertaintySet prev{1, {}};
  for (InstanceId i = 0; i < 4; ++i) prev.entries.push_back({i, 0.25, 0.25, 0.25});
  const Regressor g(1.0, 0.1, {});
  const std::vector<InstanceId> t = {0, 1, 2, 3, 4};
  const std::vector<InstanceId> fresh = {4};
  const auto a = build_uncertainty_set(2, t, std::vector<double>(5, 0.2), prev, fresh, &g, *data);
  const double total = 4 * 0.25 * multiplier + 1.0;
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(a.entries[i].weight, 0.25 * multiplier / total, 1e-15);
  EXPECT_NEAR(a.entries[4].weight, 1.0 / total, 1e-15);
  EXPECT_NEAR(std::pow(3.0, -1.0 / 8.0), multiplier, 1e-15);
}

TEST(UncertaintySet, NegatedExponentRaisesUncertainWeights) {
  auto data = line_data(2);
  UncertaintySet prev{1, {{0, 0.9, 0.9, 0.5}, {1, 0.1, 0.1, 0.5}}};
  prev.entries[0].z = 0.3;
  prev.entries[1].z = 0.01;  // eps < 1/2
  const Regressor g(1.0, 0.1, {});
  const std::vector<InstanceId> t = {0, 1};
  const auto literal = build_uncertainty_set(2, t, std::vector<double>{0.5, 0.5}, prev, {}, &g, *data);
  const auto flipped = build_uncertainty_set(2, t, std::vector<double>{0.5, 0.5}, prev, {}, &g, *data, {true, false});
  EXPECT_LT(literal.entries[0].weight, 0.5);
  EXPECT_GT(flipped.entries[0].weight, 0.5);
}

TEST(UncertaintySet, DegenerateEpsilonIsClamped) {
  auto data = line_data(2);
  UncertaintySet prev{1, {{0, 1.0, 1.0, 1.0}}};  // eps = 1
  const Regressor g(1.0, 0.1, {});
  const std::vector<InstanceId> t = {0, 1};
  const std::vector<InstanceId> fresh = {1};
  const auto a = build_uncertainty_set(2, t, std::vector<double>{0.5, 0.5}, prev, fresh, &g, *data);
  for (const auto& e : a.entries) EXPECT_TRUE(std::isfinite(e.weight));
  EXPECT_NEAR(a.weight_sum(), 1.0, 1e-12);
}

TEST(UncertaintySet, RescaledTargets) {
  auto data = line_data(4);
  const auto ids = iota_ids(4);
  const auto a = build_uncertainty_set(1, ids, std::vector<double>(4, 0.25), {}, ids, nullptr, *data, {false, true});
  for (const auto& e : a.entries) {
    EXPECT_DOUBLE_EQ(e.target, 1.0);
    EXPECT_DOUBLE_EQ(e.z, 0.25);
  }
}

// --- regressor ---------------------------------------------------------------

TEST(Regressor, ConstantTargets) {
  auto data = line_data(10);
  UncertaintySet a{1, {}};
  for (InstanceId i = 0; i < 10; ++i) a.entries.push_back({i, 0.3, 0.3, 0.1});
  const Regressor g = train_regressor(a, *data);
  for (double x = -5; x < 15; x += 0.5) {
    const double pt[] = {x};
    EXPECT_NEAR(g.predict(pt), 0.3, 1e-6);
  }
  const auto scores = score_unlabeled(g, iota_ids(10), *data);
  for (const auto& c : scores) EXPECT_NEAR(c.score, 0.3, 1e-6);
}

TEST(Regressor, ZeroWeightPointIsIgnored) {
  auto data = line_data(2);
  UncertaintySet a{1, {{0, 0.0, 0.0, 1.0}, {1, 1.0, 1.0, 0.0}}};
  const Regressor g = train_regressor(a, *data);
  EXPECT_NEAR(g.predict(data->row(0)), 0.0, 1e-12);
}

TEST(Regressor, DuplicateConflictingTargetsAverage) {
  const auto data = std::make_shared<const Dataset>(Dataset(1, {2.0, 2.0, 7.0}, {0, 1, 0}, {"a", "b"}));
  UncertaintySet a{1, {{0, 0.2, 0.2, 0.25}, {1, 0.8, 0.8, 0.25}, {2, 0.5, 0.5, 0.5}}};
  const Regressor g = train_regressor(a, *data);
  EXPECT_NEAR(g.predict(data->row(0)), 0.5, 1e-9);
}

TEST(Regressor, LearnsAStep) {
  auto data = line_data(40);
  UncertaintySet a{1, {}};
  for (InstanceId i = 0; i < 40; ++i) a.entries.push_back({i, i < 20 ? 0.1 : 0.9, 0.0, 1.0 / 40});
  const Regressor g = train_regressor(a, *data, {{3, 1.0, 0.0, 1.0}, 60, 0.3});
  const double lo[] = {3.0};
  const double hi[] = {35.0};
  EXPECT_LT(g.predict(lo), 0.2);
  EXPECT_GT(g.predict(hi), 0.8);
}

TEST(Regressor, EmptySetIsRejected) {
  auto data = line_data(2);
  EXPECT_THROW(train_regressor(UncertaintySet{}, *data), ContractError);
}

TEST(ScoreUnlabeled, EmptyAndClamped) {
  auto data = line_data(3);
  const Regressor g(0.3, 0.1, {});
  EXPECT_TRUE(score_unlabeled(g, std::vector<InstanceId>{}, *data).empty());
  const Regressor high(5.0, 0.1, {});
  const Regressor low(-2.0, 0.1, {});
  for (const auto& c : score_unlabeled(high, iota_ids(3), *data)) EXPECT_EQ(c.score, 1.0);
  for (const auto& c : score_unlabeled(low, iota_ids(3), *data)) EXPECT_EQ(c.score, 0.0);
}

// --- selection ---------------------------------------------------------------

TEST(SelectSamples, PureUncertaintyTakesTopScore) {
  const auto p = manual_partition({0, 0, 1});
  const std::vector<Candidate> c = {{0, 0.9}, {1, 0.5}, {2, 0.1}};
  const auto sel = select_samples(c, p, 1, 0.0);
  ASSERT_EQ(sel.picks.size(), 1u);
  EXPECT_EQ(sel.picks[0].id, 0u);
}

TEST(SelectSamples, LargeAlphaSpreadsAcrossGroups) {
  const auto p = manual_partition({0, 1});
  const std::vector<Candidate> c = {{0, 0.4}, {1, 0.4}};
  const auto sel = select_samples(c, p, 2, 100.0);
  EXPECT_EQ(sel.state.per_group_count, (std::vector<std::size_t>{1, 1}));
}

TEST(SelectSamples, FiveCandidatesMatchExhaustiveSubsets) {
  Rng rng(3);
  const std::vector<int> g = {0, 0, 1, 1, 0};
  const auto p = manual_partition(g);
  std::vector<Candidate> c;
  std::vector<oracle::Item> items;
  for (InstanceId i = 0; i < 5; ++i) {
    const double s = uniform_unit(rng);
    c.push_back({i, s});
    items.push_back({s, static_cast<std::size_t>(g[i])});
  }
  const auto sel = select_samples(c, p, 2, 1.0);
  EXPECT_NEAR(sel.state.objective, oracle::best_subset_objective(items, 2, 2, 1.0), 1e-9);
}

TEST(SelectSamples, OversizedRequestIsAnError) {
  const auto p = manual_partition({0, 1});
  const std::vector<Candidate> c = {{0, 0.4}, {1, 0.4}};
  EXPECT_THROW(select_samples(c, p, 3, 1.0), ContractError);
  EXPECT_THROW(select_samples(c, p, 1, -1.0), ContractError);
}

TEST(SelectSamples, DiversityOnlyIsRoundRobin) {
  const auto p = manual_partition({0, 0, 0, 0, 1, 1, 2});
  std::vector<Candidate> c;
  for (InstanceId i = 0; i < 7; ++i) c.push_back({i, i == 0 ? 0.0 : 0.9});
  const auto sel = select_samples(c, p, 5, std::numeric_limits<double>::infinity());
  EXPECT_EQ(sel.state.per_group_count, (std::vector<std::size_t>{2, 2, 1}));
  // Scores are ignored: group 0 yields ids in ascending order.
  EXPECT_EQ(sel.picks[0].id, 0u);
  EXPECT_EQ(sel.picks[0].group, 0);
  EXPECT_EQ(sel.picks[1].group, 1);
  EXPECT_EQ(sel.picks[2].group, 2);
}

TEST(SelectSamples, TieBreaksByGroupThenId) {
  const auto p = manual_partition({1, 0, 1, 0});
  const std::vector<Candidate> c = {{0, 0.5}, {1, 0.5}, {2, 0.5}, {3, 0.5}};
  const auto sel = select_samples(c, p, 2, 0.0);
  EXPECT_EQ(sel.picks[0].id, 1u);  // group 0, lowest id
  EXPECT_EQ(sel.picks[1].id, 3u);
}

namespace {

struct RandomInstance {
  GroupPartition part;
  std::vector<Candidate> candidates;
  std::vector<oracle::Item> items;
  std::size_t groups;
  std::size_t m;
};

RandomInstance random_instance(Rng& rng) {
  RandomInstance r;
  const std::size_t n = 1 + uniform_index(rng, 12);
  r.groups = 1 + uniform_index(rng, 4);
  std::vector<int> g(n);
  for (auto& v : g) v = static_cast<int>(uniform_index(rng, r.groups));
  r.part = manual_partition(g);
  r.groups = r.part.group_count();
  for (InstanceId i = 0; i < n; ++i) {
    // Coarse scores make ties common.
    const double s = static_cast<double>(uniform_index(rng, 5)) / 4.0;
    r.candidates.push_back({i, s});
    r.items.push_back({s, static_cast<std::size_t>(g[i])});
  }
  r.m = 1 + uniform_index(rng, std::min<std::size_t>(n, 5));
  return r;
}

std::size_t distinct_groups(const Selection& s) {
  std::size_t k = 0;
  for (auto c : s.state.per_group_count) k += c > 0;
  return k;
}

}  // namespace

TEST(SelectSamples, GreedyIsExactOnRandomInstances) {
  Rng rng(2024);
  const double alphas[] = {0.0, 0.5, 1.0, 2.0, 5.0};
  for (int trial = 0; trial < 200; ++trial) {
    const auto r = random_instance(rng);
    for (double alpha : alphas) {
      const auto sel = select_samples(r.candidates, r.part, r.m, alpha);
      ASSERT_EQ(sel.picks.size(), r.m);
      const double brute = oracle::best_subset_objective(r.items, r.m, r.groups, alpha);
      EXPECT_NEAR(sel.state.objective, brute, 1e-9) << "trial " << trial << " alpha " << alpha;
      // objective recomputes from scratch
      std::vector<std::size_t> idx;
      for (auto id : sel.state.chosen) idx.push_back(id);
      EXPECT_NEAR(sel.state.objective, oracle::objective(r.items, idx, r.groups, alpha), 1e-9);
      EXPECT_NEAR(l21_norm(sel.state), l21_norm(sel.state.per_group_count), 0.0);
      EXPECT_EQ(std::set<InstanceId>(sel.state.chosen.begin(), sel.state.chosen.end()).size(), r.m);
    }
  }
}

TEST(SelectSamples, SpreadIsMonotoneInAlpha) {
  Rng rng(77);
  const double alphas[] = {0.0, 0.5, 1.0, 2.0, 5.0};
  for (int trial = 0; trial < 200; ++trial) {
    auto r = random_instance(rng);
    for (auto& c : r.candidates) c.score = uniform_unit(rng);  // continuous scores, no ties
    std::size_t prev = 0;
    for (double alpha : alphas) {
      const std::size_t k = distinct_groups(select_samples(r.candidates, r.part, r.m, alpha));
      EXPECT_GE(k, prev) << "trial " << trial << " alpha " << alpha;
      prev = k;
    }
  }
}
