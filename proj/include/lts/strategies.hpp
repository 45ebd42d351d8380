#pragma once

// Strategy runners: the learning-to-sample loop and the CART / XG / random
// baselines it is compared against.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "lts/common.hpp"
#include "lts/dataset.hpp"
#include "lts/gboost.hpp"
#include "lts/metrics.hpp"
#include "lts/sampler.hpp"
#include "lts/tree.hpp"

namespace lts {

enum class StrategyKind { Cart, XgOneOff, XgRandom, XgUncertainty, XgDiversity, XgLts, XgLtsExp };

struct Strategy {
  StrategyKind kind = StrategyKind::XgLts;
  double alpha = 1.0;  // used by XG+LTS and XG+LTS(E) only

  /// Alpha actually applied by the selector; US and DS pin it to 0 and +inf.
  double effective_alpha() const {
    switch (kind) {
      case StrategyKind::XgUncertainty: return 0.0;
      case StrategyKind::XgDiversity: return std::numeric_limits<double>::infinity();
      default: return alpha;
    }
  }
  bool is_lts() const {
    return kind == StrategyKind::XgUncertainty || kind == StrategyKind::XgDiversity || kind == StrategyKind::XgLts ||
           kind == StrategyKind::XgLtsExp;
  }

  std::string base_name() const {
    switch (kind) {
      case StrategyKind::Cart: return "CART";
      case StrategyKind::XgOneOff: return "XG";
      case StrategyKind::XgRandom: return "XG+RS";
      case StrategyKind::XgUncertainty: return "XG+US";
      case StrategyKind::XgDiversity: return "XG+DS";
      case StrategyKind::XgLts: return "XG+LTS";
      case StrategyKind::XgLtsExp: return "XG+LTS(E)";
    }
    return "?";
  }

  /// Display name; LTS variants carry their alpha, e.g. "XG+LTS:0.5".
  std::string name() const {
    if (kind != StrategyKind::XgLts && kind != StrategyKind::XgLtsExp) return base_name();
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", alpha);
    return base_name() + ":" + buf;
  }

  /// Accepts the display names above; "XG+LTS" without ":alpha" takes `default_alpha`.
  static Strategy parse(const std::string& text, double default_alpha = 1.0) {
    std::string base = text;
    std::optional<double> alpha;
    if (const auto colon = text.rfind(':'); colon != std::string::npos) {
      base = text.substr(0, colon);
      const std::string num = text.substr(colon + 1);
      char* end = nullptr;
      const double v = std::strtod(num.c_str(), &end);
      if (num.empty() || end != num.c_str() + num.size() || !(v >= 0.0) || std::isinf(v))
        throw DataError("strategy '" + text + "': alpha must be a finite number >= 0");
      alpha = v;
    }
    static const std::pair<const char*, StrategyKind> names[] = {
        {"CART", StrategyKind::Cart},           {"XG", StrategyKind::XgOneOff},
        {"XG+RS", StrategyKind::XgRandom},      {"XG+US", StrategyKind::XgUncertainty},
        {"XG+DS", StrategyKind::XgDiversity},   {"XG+LTS", StrategyKind::XgLts},
        {"XG+LTS(E)", StrategyKind::XgLtsExp},
    };
    for (const auto& [n, k] : names) {
      if (base != n) continue;
      Strategy s{k, alpha.value_or(default_alpha)};
      if (alpha && k != StrategyKind::XgLts && k != StrategyKind::XgLtsExp)
        throw DataError("strategy '" + text + "' does not take an alpha");
      if (!(s.alpha >= 0.0) || std::isinf(s.alpha)) throw DataError("alpha must be a finite number >= 0");
      return s;
    }
    throw DataError("unknown strategy '" + text + "'");
  }
};

struct BoostConfig {
  std::size_t rounds_per_iteration = 10;
  double learning_rate = 0.1;
  TreeRegularization reg{};
};

struct RunOptions {
  BoostConfig boost{};
  RegressorConfig regressor{};
  WeightOptions weights{};
  ScheduleMode schedule = ScheduleMode::Equal;  // XG+LTS(E) always uses Exponential
  bool retrain_from_scratch = false;            // XG+RS only
  std::size_t max_groups = 4096;
};

/// Held-out ids and the class scored by precision / recall / FM.
struct Evaluation {
  std::vector<InstanceId> test_ids;
  ClassLabel positive = 1;
};

struct IterationTrace {
  std::size_t iteration = 0;
  std::size_t labeled_count = 0;  // |T^(t)|
  std::size_t consumed_budget = 0;
  double train_loss = 0.0;  // mean logistic loss; training error rate for CART
  std::optional<MetricsSnapshot> metrics;
  std::optional<double> weight_sum;    // sum of uncertainty-set weights (LTS family)
  std::vector<SelectedSample> added;  // samples that entered T at this iteration

  bool operator==(const IterationTrace&) const = default;
};

using TrainedModel = std::variant<BoostModel, CartModel>;

struct RunResult {
  TrainedModel model;
  std::vector<IterationTrace> trace;
};

/// Read-only view handed to observers after every iteration.
struct IterationView {
  std::size_t iteration;
  const Pool& pool;
  const LabeledSet& training;
  const UncertaintySet* uncertainty;  // null for non-LTS strategies
};
using IterationObserver = std::function<void(const IterationView&)>;

namespace detail {

inline std::vector<InstanceId> sample_uniform(const Pool& pool, std::size_t m, Rng& rng) {
  std::vector<InstanceId> ids = pool.unlabeled_ids();
  require(m <= ids.size(), "sample size exceeds the unlabeled pool");
  for (std::size_t i = 0; i < m; ++i) std::swap(ids[i], ids[i + uniform_index(rng, ids.size() - i)]);
  ids.resize(m);
  return ids;
}

inline std::vector<SelectedSample> plain_picks(std::span<const InstanceId> ids) {
  std::vector<SelectedSample> out;
  out.reserve(ids.size());
  for (InstanceId id : ids) out.push_back({id, -1, 0.0, 0.0});
  return out;
}

template <class Model>
std::optional<MetricsSnapshot> evaluate(const Model& model, const Pool& pool, const Evaluation* eval) {
  if (eval == nullptr || eval->test_ids.empty()) return std::nullopt;
  const auto pred = classify(model, eval->test_ids, pool.data());
  std::vector<ClassLabel> truth;
  truth.reserve(eval->test_ids.size());
  for (InstanceId id : eval->test_ids) {
    require(!pool.contains(id), "test id leaked into the training pool");
    truth.push_back(pool.data().truth(id));
  }
  return compute_metrics(pred, truth, eval->positive, pool.class_count());
}

inline BoostModel fresh_model(const Pool& pool, const BoostConfig& cfg) {
  return BoostModel(LossSpec::for_classes(pool.class_count(), cfg.learning_rate), cfg.reg);
}

}  // namespace detail

/// The learning-to-sample loop. Seeds with a pure-diversity batch, then per
/// iteration: extend T, add boosting trees, build the uncertainty set from
/// softmax losses, fit the regressor, and pick the next batch by the
/// uncertainty + alpha * l2,1 objective. The final iteration selects nothing,
/// so exactly schedule.total() labels are queried.
inline RunResult run_lts(Pool pool, const GroupPartition& part, const BudgetSchedule& schedule, double alpha,
                         const RunOptions& opt, std::uint64_t rng_seed, const Evaluation* eval = nullptr,
                         const IterationObserver& observer = {}) {
  require(schedule.iterations >= 1 && schedule.sizes.size() == schedule.iterations, "malformed schedule");
  require(schedule.total() <= pool.unlabeled_count(), "schedule exceeds the unlabeled pool");
  pool.set_budget_cap(pool.consumed_budget() + schedule.total());
  const Dataset& data = pool.data();

  BoostModel model = detail::fresh_model(pool, opt.boost);
  RunResult result{model, {}};

  std::vector<SelectedSample> delta;
  {
    const auto seed_ids = select_seed(part, pool.unlabeled_ids(), schedule.sizes[0], rng_seed);
    if (seed_ids.empty()) throw ContractError("seed selection produced no samples");
    std::vector<std::size_t> counts(part.group_count(), 0);
    for (InstanceId id : seed_ids) {
      pool.query(id);
      const int g = part.group(id);
      const auto c = counts[static_cast<std::size_t>(g)]++;
      delta.push_back({id, g, 0.0, std::sqrt(static_cast<double>(c + 1)) - std::sqrt(static_cast<double>(c))});
    }
  }

  UncertaintySet previous;
  std::optional<Regressor> previous_g;
  for (std::size_t t = 1; t <= schedule.iterations; ++t) {
    const LabeledSet training = LabeledSet::from_pool(pool);
    train_round(model, training, opt.boost.rounds_per_iteration);

    const auto losses = per_sample_loss(model, training);
    const auto z = softmax_uncertainty(losses);
    std::vector<InstanceId> new_ids;
    new_ids.reserve(delta.size());
    for (const auto& s : delta) new_ids.push_back(s.id);
    UncertaintySet current = build_uncertainty_set(t, training.ids, z, previous, new_ids,
                                                   previous_g ? &*previous_g : nullptr, data, opt.weights);
    Regressor g = train_regressor(current, data, opt.regressor);

    IterationTrace row;
    row.iteration = t;
    row.labeled_count = training.size();
    row.consumed_budget = pool.consumed_budget();
    double mean = 0.0;
    for (double l : losses) mean += l;
    row.train_loss = mean / static_cast<double>(losses.size());
    row.metrics = detail::evaluate(model, pool, eval);
    row.weight_sum = current.weight_sum();
    row.added = std::move(delta);
    result.trace.push_back(std::move(row));
    if (observer) observer({t, pool, training, &current});

    delta.clear();
    if (t < schedule.iterations) {
      const auto unlabeled = pool.unlabeled_ids();
      const auto scores = score_unlabeled(g, unlabeled, data);
      Selection sel = select_samples(scores, part, schedule.sizes[t], alpha);
      for (const auto& p : sel.picks) pool.query(p.id);
      delta = std::move(sel.picks);
    }
    previous = std::move(current);
    previous_g = std::move(g);
  }
  result.model = std::move(model);
  return result;
}

/// CART, XG (one-off) and XG+RS. One-off strategies spend the whole budget on
/// one uniform sample; XG trains rounds_per_iteration * n rounds on it so it
/// matches XG+RS tree for tree when n = 1.
inline RunResult run_baseline(StrategyKind kind, Pool pool, const BudgetSchedule& schedule, const RunOptions& opt,
                              std::uint64_t rng_seed, const Evaluation* eval = nullptr,
                              const IterationObserver& observer = {}) {
  require(kind == StrategyKind::Cart || kind == StrategyKind::XgOneOff || kind == StrategyKind::XgRandom,
          "run_baseline handles CART, XG and XG+RS only");
  require(schedule.iterations >= 1 && schedule.sizes.size() == schedule.iterations, "malformed schedule");
  const std::size_t budget = schedule.total();
  require(budget <= pool.unlabeled_count(), "budget exceeds the unlabeled pool");
  pool.set_budget_cap(pool.consumed_budget() + budget);
  Rng rng(rng_seed);

  auto acquire = [&](std::size_t m) {
    const auto ids = detail::sample_uniform(pool, m, rng);
    for (InstanceId id : ids) pool.query(id);
    return detail::plain_picks(ids);
  };

  if (kind == StrategyKind::Cart) {
    auto picks = acquire(budget);
    const LabeledSet training = LabeledSet::from_pool(pool);
    CartModel cart = train_cart(pool, training.ids, opt.boost.reg.max_depth);
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < training.size(); ++i)
      wrong += cart.predict(pool.data().row(training.ids[i])) != training.labels[i];
    IterationTrace row{1, training.size(), pool.consumed_budget(), safe_ratio(wrong, training.size()),
                       detail::evaluate(cart, pool, eval), std::nullopt, std::move(picks)};
    if (observer) observer({1, pool, training, nullptr});
    return {std::move(cart), {std::move(row)}};
  }

  BoostModel model = detail::fresh_model(pool, opt.boost);
  std::vector<IterationTrace> trace;
  const bool one_off = kind == StrategyKind::XgOneOff;
  const std::size_t iterations = one_off ? 1 : schedule.iterations;
  auto picks = acquire(one_off ? budget : schedule.sizes[0]);
  for (std::size_t t = 1; t <= iterations; ++t) {
    const LabeledSet training = LabeledSet::from_pool(pool);
    if (one_off) {
      train_round(model, training, opt.boost.rounds_per_iteration * schedule.iterations);
    } else if (opt.retrain_from_scratch) {
      model = detail::fresh_model(pool, opt.boost);
      train_round(model, training, opt.boost.rounds_per_iteration * t);
    } else {
      train_round(model, training, opt.boost.rounds_per_iteration);
    }
    IterationTrace row{t, training.size(), pool.consumed_budget(), mean_loss(model, training),
                       detail::evaluate(model, pool, eval), std::nullopt, std::move(picks)};
    trace.push_back(std::move(row));
    if (observer) observer({t, pool, training, nullptr});
    picks.clear();
    if (t < iterations) picks = acquire(schedule.sizes[t]);
  }
  return {std::move(model), std::move(trace)};
}

/// Budget schedule for a strategy: one-off baselines use a single batch,
/// XG+LTS(E) the exponential split, the rest `opt.schedule`.
inline BudgetSchedule schedule_for(const Strategy& s, std::size_t budget, std::size_t iterations, const RunOptions& opt) {
  if (s.kind == StrategyKind::XgLtsExp) return make_schedule(budget, iterations, ScheduleMode::Exponential);
  return make_schedule(budget, iterations, opt.schedule);
}

/// Runs any strategy on an unlabeled training pool with budget `budget`
/// spread over `iterations`.
inline RunResult run_strategy(const Strategy& s, const Pool& train, std::size_t budget, std::size_t iterations,
                              const RunOptions& opt, std::uint64_t rng_seed, const Evaluation* eval = nullptr,
                              const IterationObserver& observer = {}) {
  require(budget >= 1, "budget must be >= 1");
  if (budget > train.unlabeled_count()) throw ContractError("budget exceeds the training pool");
  const BudgetSchedule schedule = schedule_for(s, budget, iterations, opt);
  if (!s.is_lts()) return run_baseline(s.kind, train, schedule, opt, rng_seed, eval, observer);
  const GroupPartition part = partition_groups(train, budget, iterations, opt.max_groups);
  return run_lts(train, part, schedule, s.effective_alpha(), opt, rng_seed, eval, observer);
}

}  // namespace lts
