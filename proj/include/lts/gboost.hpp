#pragma once

// Additive tree classifier trained stage-wise with Newton steps on a logistic
// loss, plus the per-sample loss extraction and softmax layer that feed the
// sampling model.

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "lts/common.hpp"
#include "lts/dataset.hpp"
#include "lts/tree.hpp"

namespace lts {

enum class LossKind { BinaryLogistic, OneVsRestLogistic };

struct LossSpec {
  LossKind kind = LossKind::BinaryLogistic;
  std::size_t classes = 2;
  double learning_rate = 0.1;
  double base_score = 0.0;

  static LossSpec for_classes(std::size_t classes, double learning_rate = 0.1) {
    return {classes > 2 ? LossKind::OneVsRestLogistic : LossKind::BinaryLogistic, classes, learning_rate, 0.0};
  }
  std::size_t class_slots() const { return kind == LossKind::BinaryLogistic ? 1 : classes; }
};

struct TreeRegularization {
  std::size_t max_depth = 5;
  double lambda = 1.0;
  double gamma = 0.0;
  double min_child_weight = 1.0;
};

namespace logistic {

inline double sigmoid(double s) {
  if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

/// log(1 + exp(x)) without overflow.
inline double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

/// Loss for raw score s and target y in {0,1}: log(1 + exp(-margin)), margin = s*(2y-1).
inline double loss(double s, int y) { return softplus(y ? -s : s); }
inline double gradient(double s, int y) { return sigmoid(s) - static_cast<double>(y); }
inline double hessian(double s) {
  const double p = sigmoid(s);
  return p * (1.0 - p);
}

}  // namespace logistic

struct BoostTree {
  std::size_t slot = 0;
  RegTree tree;
};

class BoostModel {
 public:
  BoostModel() = default;
  BoostModel(LossSpec loss, TreeRegularization reg) : loss_(loss), reg_(reg) {
    require(loss_.classes >= 2, "boosting needs >= 2 classes");
    require(loss_.learning_rate > 0.0 && loss_.learning_rate <= 1.0, "learning rate must lie in (0,1]");
    require(reg_.max_depth >= 1, "max_depth must be >= 1");
    require(reg_.lambda >= 0.0 && reg_.gamma >= 0.0 && reg_.min_child_weight >= 0.0,
            "tree regularization must be non-negative");
  }

  const LossSpec& loss() const { return loss_; }
  const TreeRegularization& regularization() const { return reg_; }
  const std::vector<BoostTree>& trees() const { return trees_; }
  std::size_t class_slots() const { return loss_.class_slots(); }
  std::size_t rounds() const { return trees_.size() / class_slots(); }

  void append(std::size_t slot, RegTree tree) {
    require(slot < class_slots(), "class slot out of range");
    trees_.push_back({slot, std::move(tree)});
  }

  /// base_score + eta * sum of matching leaves, per class slot.
  std::vector<double> predict_score(std::span<const double> x) const {
    std::vector<double> s(class_slots(), 0.0);
    for (const auto& t : trees_) s[t.slot] += t.tree.predict(x);
    for (double& v : s) v = loss_.base_score + loss_.learning_rate * v;
    return s;
  }

  ClassLabel predict_label(std::span<const double> x) const { return decide(predict_score(x)); }

  ClassLabel decide(const std::vector<double>& scores) const {
    if (loss_.kind == LossKind::BinaryLogistic) return logistic::sigmoid(scores[0]) > 0.5 ? 1 : 0;
    std::size_t best = 0;
    for (std::size_t c = 1; c < scores.size(); ++c)
      if (scores[c] > scores[best]) best = c;
    return static_cast<ClassLabel>(best);
  }

  /// Loss of one sample at raw scores. One-vs-rest sums the slot losses.
  double sample_loss(const std::vector<double>& scores, ClassLabel y) const {
    if (loss_.kind == LossKind::BinaryLogistic) return logistic::loss(scores[0], y == 1);
    double l = 0.0;
    for (std::size_t c = 0; c < scores.size(); ++c) l += logistic::loss(scores[c], static_cast<std::size_t>(y) == c);
    return l;
  }

 private:
  LossSpec loss_;
  TreeRegularization reg_;
  std::vector<BoostTree> trees_;
};

inline std::vector<double> predict_score(const BoostModel& model, const Instance& x, std::size_t expected_dim) {
  require(x.features.size() == expected_dim, "dimension mismatch");
  return model.predict_score(x.features);
}

/// A labeled training pair as seen by the boosting model.
struct LabeledSet {
  const Dataset* data = nullptr;
  std::vector<InstanceId> ids;
  std::vector<ClassLabel> labels;

  static LabeledSet from_pool(const Pool& pool) {
    LabeledSet t{&pool.data(), pool.labeled_ids(), {}};
    t.labels.reserve(t.ids.size());
    for (InstanceId id : t.ids) t.labels.push_back(pool.label_of(id));
    return t;
  }
  std::size_t size() const { return ids.size(); }
};

inline std::vector<double> per_sample_loss(const BoostModel& model, const LabeledSet& t) {
  require(t.size() > 0, "per-sample loss needs a nonempty training set");
  std::vector<double> l;
  l.reserve(t.size());
  for (std::size_t i = 0; i < t.size(); ++i)
    l.push_back(model.sample_loss(model.predict_score(t.data->row(t.ids[i])), t.labels[i]));
  return l;
}

inline double mean_loss(const BoostModel& model, const LabeledSet& t) {
  const auto l = per_sample_loss(model, t);
  double s = 0.0;
  for (double v : l) s += v;
  return s / static_cast<double>(l.size());
}

/// z_i = exp(l_i) / sum_j exp(l_j), with max subtraction.
inline std::vector<double> softmax_uncertainty(std::span<const double> losses) {
  require(!losses.empty(), "softmax over an empty loss vector");
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : losses) {
    if (std::isnan(v)) throw ContractError("softmax input contains NaN");
    require(std::isfinite(v), "softmax input must be finite");
    hi = std::max(hi, v);
  }
  std::vector<double> z(losses.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    z[i] = std::exp(losses[i] - hi);
    sum += z[i];
  }
  for (double& v : z) v /= sum;
  return z;
}

/// Appends rounds x class_slots Newton trees fit on `t` at the model's current
/// scores. Scores are carried incrementally across the rounds.
inline void train_round(BoostModel& model, const LabeledSet& t, std::size_t rounds) {
  require(t.size() > 0, "cannot train on an empty training set");
  const TrainingMatrix m(*t.data, t.ids);
  const std::size_t slots = model.class_slots();
  const std::size_t q = t.size();
  const double eta = model.loss().learning_rate;

  std::vector<std::vector<double>> scores(slots, std::vector<double>(q));
  for (std::size_t i = 0; i < q; ++i) {
    const auto s = model.predict_score(m.row(i));
    for (std::size_t k = 0; k < slots; ++k) scores[k][i] = s[k];
  }

  std::vector<double> grad(q);
  std::vector<double> hess(q);
  const auto& reg = model.regularization();
  for (std::size_t r = 0; r < rounds; ++r) {
    // One-vs-rest slots within a round are fit against the same start scores.
    std::vector<RegTree> fitted;
    fitted.reserve(slots);
    for (std::size_t k = 0; k < slots; ++k) {
      for (std::size_t i = 0; i < q; ++i) {
        const int y = slots == 1 ? (t.labels[i] == 1) : (static_cast<std::size_t>(t.labels[i]) == k);
        grad[i] = logistic::gradient(scores[k][i], y);
        hess[i] = logistic::hessian(scores[k][i]);
      }
      NewtonCriterion crit{grad, hess, reg.lambda, reg.gamma, reg.min_child_weight};
      fitted.push_back(grow_tree(m, crit, reg.max_depth));
    }
    for (std::size_t k = 0; k < slots; ++k) {
      for (std::size_t i = 0; i < q; ++i) scores[k][i] += eta * fitted[k].predict(m.row(i));
      model.append(k, std::move(fitted[k]));
    }
  }
}

inline std::vector<ClassLabel> classify(const BoostModel& model, std::span<const InstanceId> ids, const Dataset& data) {
  std::vector<ClassLabel> out;
  out.reserve(ids.size());
  for (InstanceId id : ids) out.push_back(model.predict_label(data.row(id)));
  return out;
}

inline std::vector<ClassLabel> classify(const CartModel& model, std::span<const InstanceId> ids, const Dataset& data) {
  std::vector<ClassLabel> out;
  out.reserve(ids.size());
  for (InstanceId id : ids) out.push_back(model.predict(data.row(id)));
  return out;
}

// Debug dump; not a stable format.
inline nlohmann::json tree_to_json(const RegTree& tree) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : tree.nodes()) {
    if (n.is_leaf())
      nodes.push_back({{"leaf", n.value}});
    else
      nodes.push_back({{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right}});
  }
  return nodes;
}

inline nlohmann::json model_to_json(const BoostModel& model) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : model.trees()) trees.push_back({{"slot", t.slot}, {"nodes", tree_to_json(t.tree)}});
  return {{"learning_rate", model.loss().learning_rate},
          {"base_score", model.loss().base_score},
          {"class_slots", model.class_slots()},
          {"trees", std::move(trees)}};
}

}  // namespace lts
