#pragma once

// The sampling model: budget schedules, diversity seeding, dynamic sample
// weights, the uncertainty regressor and the uncertainty-plus-l2,1 selector.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "lts/common.hpp"
#include "lts/dataset.hpp"
#include "lts/gboost.hpp"
#include "lts/tree.hpp"

namespace lts {

// ---------------------------------------------------------------------------
// Budget schedules
// ---------------------------------------------------------------------------

enum class ScheduleMode { Equal, Exponential };

struct BudgetSchedule {
  std::size_t budget = 0;
  std::size_t iterations = 0;
  ScheduleMode mode = ScheduleMode::Equal;
  std::vector<std::size_t> sizes;  // |Delta^(0)| .. |Delta^(n-1)|

  std::size_t total() const {
    std::size_t s = 0;
    for (auto v : sizes) s += v;
    return s;
  }
};

/// Equal: floor(budget/n) each, remainder to the final batch.
/// Exponential: floor(budget/2^(t+1)) for t < n-1, at least 1, and never so
/// large that a later batch would be left empty; the final batch takes the rest.
inline BudgetSchedule make_schedule(std::size_t budget, std::size_t iterations, ScheduleMode mode) {
  require(iterations >= 1, "schedule needs at least one iteration");
  if (budget < iterations) throw ContractError("budget smaller than the number of iterations");
  BudgetSchedule s{budget, iterations, mode, std::vector<std::size_t>(iterations, 0)};
  if (mode == ScheduleMode::Equal) {
    std::fill(s.sizes.begin(), s.sizes.end(), budget / iterations);
    s.sizes.back() += budget % iterations;
    return s;
  }
  std::size_t used = 0;
  for (std::size_t t = 0; t + 1 < iterations; ++t) {
    const std::size_t share = t + 1 < 64 ? (budget >> (t + 1)) : 0;
    const std::size_t reserve = iterations - 1 - t;  // one label for each later batch
    s.sizes[t] = std::min(std::max<std::size_t>(share, 1), budget - used - reserve);
    used += s.sizes[t];
  }
  s.sizes.back() = budget - used;
  return s;
}

// ---------------------------------------------------------------------------
// l2,1 diversity and the selection state
// ---------------------------------------------------------------------------

struct SelectionState {
  std::vector<InstanceId> chosen;
  std::vector<std::size_t> per_group_count;
  double score_sum = 0.0;
  double objective = 0.0;
};

/// sum_j sqrt(c_j): the l2,1 norm of a binary indicator grouped by c_j.
inline double l21_norm(std::span<const std::size_t> group_counts) {
  double s = 0.0;
  for (std::size_t c : group_counts) s += std::sqrt(static_cast<double>(c));
  return s;
}

inline double l21_norm(const SelectionState& state) { return l21_norm(state.per_group_count); }

/// Objective sum(score) + alpha * l21, recomputed from scratch.
inline double selection_objective(double score_sum, std::span<const std::size_t> group_counts, double alpha) {
  return score_sum + alpha * l21_norm(group_counts);
}

// ---------------------------------------------------------------------------
// Seed selection
// ---------------------------------------------------------------------------

/// Picks m ids maximising the l2,1 term alone: round-robin over non-empty
/// groups, largest first (ties to the lower group id), one uniform draw per visit.
inline std::vector<InstanceId> select_seed(const GroupPartition& part, std::span<const InstanceId> unlabeled,
                                           std::size_t m, std::uint64_t rng_seed) {
  if (m == 0) return {};
  require(!unlabeled.empty(), "seed selection on an empty pool");
  require(m <= unlabeled.size(), "seed size exceeds the unlabeled pool");

  std::vector<std::vector<InstanceId>> members(part.group_count());
  for (InstanceId id : unlabeled) {
    const int g = part.group(id);
    require(g >= 0, "unlabeled id has no group");
    members[static_cast<std::size_t>(g)].push_back(id);
  }
  std::vector<std::size_t> order;
  for (std::size_t g = 0; g < members.size(); ++g)
    if (!members[g].empty()) order.push_back(g);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return members[a].size() > members[b].size(); });

  Rng rng(rng_seed);
  std::vector<InstanceId> picked;
  picked.reserve(m);
  while (picked.size() < m) {
    for (std::size_t g : order) {
      auto& pool = members[g];
      if (pool.empty()) continue;
      const std::size_t k = uniform_index(rng, pool.size());
      picked.push_back(pool[k]);
      pool[k] = pool.back();
      pool.pop_back();
      if (picked.size() == m) break;
    }
  }
  return picked;
}

// ---------------------------------------------------------------------------
// Uncertainty regressor
// ---------------------------------------------------------------------------

struct RegressorConfig {
  TreeRegularization reg{3, 1.0, 0.0, 1.0};
  std::size_t rounds = 20;
  double learning_rate = 0.1;
};

/// Squared-loss tree ensemble started at the weighted target mean; outputs are
/// clamped to [0,1].
class Regressor {
 public:
  Regressor() = default;
  Regressor(double base, double learning_rate, std::vector<RegTree> trees)
      : base_(base), eta_(learning_rate), trees_(std::move(trees)) {}

  double raw(std::span<const double> x) const {
    double s = 0.0;
    for (const auto& t : trees_) s += t.predict(x);
    return base_ + eta_ * s;
  }
  double predict(std::span<const double> x) const { return std::clamp(raw(x), 0.0, 1.0); }
  double base() const { return base_; }
  const std::vector<RegTree>& trees() const { return trees_; }

 private:
  double base_ = 0.0;
  double eta_ = 0.1;
  std::vector<RegTree> trees_;
};

struct UncertaintyEntry {
  InstanceId id = 0;
  double target = 0.0;  // regression target (softmax z, optionally scaled by q)
  double z = 0.0;       // raw softmax output
  double weight = 0.0;
};

struct UncertaintySet {
  std::size_t iteration = 0;
  std::vector<UncertaintyEntry> entries;

  double weight_sum() const {
    double s = 0.0;
    for (const auto& e : entries) s += e.weight;
    return s;
  }
  const UncertaintyEntry* find(InstanceId id) const {
    for (const auto& e : entries)
      if (e.id == id) return &e;
    return nullptr;
  }
};

/// Fits sum_i w_i (g(x_i) - z_i)^2 + tree penalty. Weights are rescaled to
/// mean 1 before fitting so lambda and min_child_weight act per sample.
inline Regressor train_regressor(const UncertaintySet& a, const Dataset& data, const RegressorConfig& cfg = {}) {
  require(!a.entries.empty(), "regressor needs a nonempty training set");
  const std::size_t q = a.entries.size();
  std::vector<InstanceId> ids;
  std::vector<double> w;
  std::vector<double> z;
  ids.reserve(q);
  double wsum = 0.0;
  for (const auto& e : a.entries) {
    ids.push_back(e.id);
    w.push_back(e.weight);
    z.push_back(e.target);
    wsum += e.weight;
  }
  require(wsum > 0.0, "regressor weights sum to zero");
  const double scale = static_cast<double>(q) / wsum;
  double base = 0.0;
  for (std::size_t i = 0; i < q; ++i) {
    w[i] *= scale;
    base += w[i] * z[i];
  }
  base /= static_cast<double>(q);

  const TrainingMatrix m(data, ids);
  std::vector<double> pred(q, base);
  std::vector<double> grad(q);
  std::vector<RegTree> trees;
  trees.reserve(cfg.rounds);
  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    for (std::size_t i = 0; i < q; ++i) grad[i] = w[i] * (pred[i] - z[i]);
    NewtonCriterion crit{grad, w, cfg.reg.lambda, cfg.reg.gamma, cfg.reg.min_child_weight};
    RegTree tree = grow_tree(m, crit, cfg.reg.max_depth);
    for (std::size_t i = 0; i < q; ++i) pred[i] += cfg.learning_rate * tree.predict(m.row(i));
    trees.push_back(std::move(tree));
  }
  return Regressor(base, cfg.learning_rate, std::move(trees));
}

struct Candidate {
  InstanceId id = 0;
  double score = 0.0;
};

/// Clamped regressor scores in the order of `ids`.
inline std::vector<Candidate> score_unlabeled(const Regressor& g, std::span<const InstanceId> ids, const Dataset& data) {
  std::vector<Candidate> out;
  out.reserve(ids.size());
  for (InstanceId id : ids) out.push_back({id, g.predict(data.row(id))});
  return out;
}

// ---------------------------------------------------------------------------
// Dynamic weights
// ---------------------------------------------------------------------------

struct WeightOptions {
  bool negate_exponent = false;  // flip the sign of the adjustment exponent
  bool rescale_targets = false;  // regression targets z * q instead of z
};

inline constexpr double kEpsilonClamp = 1e-6;

/// Builds A^(t). Fresh samples start at 1/|new|; every sample carried over
/// from `previous` is multiplied by exp(-1/2 ln((1-e)/e) g(x) z_prev) with
/// e = sum z_prev / |previous|. All weights are then normalised to sum to 1.
inline UncertaintySet build_uncertainty_set(std::size_t iteration, std::span<const InstanceId> training_ids,
                                            std::span<const double> z, const UncertaintySet& previous,
                                            std::span<const InstanceId> new_ids, const Regressor* previous_g,
                                            const Dataset& data, const WeightOptions& opt = {}) {
  require(z.size() == training_ids.size(), "softmax targets must cover the training set");
  require(!training_ids.empty(), "uncertainty set needs training samples");

  std::vector<char> in_training(data.size(), 0);
  for (InstanceId id : training_ids) in_training[id] = 1;
  std::vector<char> is_new(data.size(), 0);
  for (InstanceId id : new_ids) {
    require(in_training[id], "new sample missing from the training set");
    is_new[id] = 1;
  }

  std::vector<double> carried(data.size(), -1.0);
  if (!previous.entries.empty()) {
    require(previous_g != nullptr, "weight adjustment needs the previous regressor");
    double zsum = 0.0;
    for (const auto& e : previous.entries) zsum += e.z;
    const double eps = std::clamp(zsum / static_cast<double>(previous.entries.size()), kEpsilonClamp, 1.0 - kEpsilonClamp);
    const double rate = 0.5 * std::log((1.0 - eps) / eps) * (opt.negate_exponent ? -1.0 : 1.0);
    for (const auto& e : previous.entries) {
      require(in_training[e.id], "previous sample dropped from the training set");
      carried[e.id] = e.weight * std::exp(-rate * previous_g->predict(data.row(e.id)) * e.z);
    }
  }

  const double fresh = new_ids.empty() ? 0.0 : 1.0 / static_cast<double>(new_ids.size());
  UncertaintySet a{iteration, {}};
  a.entries.reserve(training_ids.size());
  double total = 0.0;
  const double q = static_cast<double>(training_ids.size());
  for (std::size_t i = 0; i < training_ids.size(); ++i) {
    const InstanceId id = training_ids[i];
    double w = 0.0;
    if (carried[id] >= 0.0 && !is_new[id]) {
      w = carried[id];
    } else {
      require(is_new[id], "training sample is neither new nor carried over");
      w = fresh;
    }
    total += w;
    a.entries.push_back({id, opt.rescale_targets ? z[i] * q : z[i], z[i], w});
  }
  require(total > 0.0 && std::isfinite(total), "degenerate weight normalisation");
  for (auto& e : a.entries) e.weight /= total;
  return a;
}

// ---------------------------------------------------------------------------
// Selection
// ---------------------------------------------------------------------------

struct SelectedSample {
  InstanceId id = 0;
  int group = -1;
  double score = 0.0;
  double gain = 0.0;  // marginal objective gain when picked

  bool operator==(const SelectedSample&) const = default;
};

struct Selection {
  std::vector<SelectedSample> picks;  // in pick order
  SelectionState state;
};

inline bool diversity_only(double alpha) { return std::isinf(alpha) && alpha > 0.0; }

/// Greedy maximisation of sum(score) + alpha * sum_j sqrt(c_j) under |picks| = m.
/// Each group keeps candidates by score desc (id asc); each step takes the best
/// head gain score + alpha(sqrt(c+1) - sqrt(c)), ties to the lower group id.
/// alpha = +inf ranks on the diversity term only with scores treated as 0.
inline Selection select_samples(std::span<const Candidate> candidates, const GroupPartition& part, std::size_t m,
                                double alpha) {
  require(!std::isnan(alpha) && alpha >= 0.0, "alpha must be >= 0");
  if (m > candidates.size()) throw ContractError("selection size exceeds the unlabeled pool");
  const bool div_only = diversity_only(alpha);

  const std::size_t groups = part.group_count();
  std::vector<std::vector<Candidate>> queue(groups);
  for (const auto& c : candidates) {
    const int g = part.group(c.id);
    require(g >= 0, "candidate has no group");
    queue[static_cast<std::size_t>(g)].push_back({c.id, div_only ? 0.0 : c.score});
  }
  for (auto& q : queue)
    std::sort(q.begin(), q.end(), [](const Candidate& a, const Candidate& b) {
      return a.score > b.score || (a.score == b.score && a.id < b.id);
    });

  Selection sel;
  sel.state.per_group_count.assign(groups, 0);
  std::vector<std::size_t> head(groups, 0);
  auto step = [&](std::size_t count) {
    return std::sqrt(static_cast<double>(count + 1)) - std::sqrt(static_cast<double>(count));
  };

  for (std::size_t pick = 0; pick < m; ++pick) {
    std::size_t best_group = groups;
    double best_gain = -std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < groups; ++g) {
      if (head[g] >= queue[g].size()) continue;
      const double div = step(sel.state.per_group_count[g]);
      const double gain = div_only ? div : queue[g][head[g]].score + alpha * div;
      if (gain > best_gain) {
        best_gain = gain;
        best_group = g;
      }
    }
    const Candidate& c = queue[best_group][head[best_group]++];
    ++sel.state.per_group_count[best_group];
    sel.state.chosen.push_back(c.id);
    sel.state.score_sum += c.score;
    sel.picks.push_back({c.id, static_cast<int>(best_group), c.score, best_gain});
  }
  sel.state.objective = div_only ? l21_norm(sel.state)
                                 : selection_objective(sel.state.score_sum, sel.state.per_group_count, alpha);
  return sel;
}

}  // namespace lts
