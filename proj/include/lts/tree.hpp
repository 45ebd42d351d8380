#pragma once

// Binary decision trees over dense features and an exact greedy, level-wise
// builder parameterised by a split criterion. The same engine grows Newton
// boosting trees, the squared-loss uncertainty regressor, and the gini CART.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "lts/common.hpp"
#include "lts/dataset.hpp"

namespace lts {

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;

  bool is_leaf() const { return feature < 0; }
};

/// x goes left when x[feature] < threshold.
class RegTree {
 public:
  RegTree() : nodes_{TreeNode{}} {}
  explicit RegTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {
    require(!nodes_.empty(), "tree needs at least one node");
  }

  static RegTree leaf(double value) {
    TreeNode n;
    n.value = value;
    return RegTree({n});
  }

  double predict(std::span<const double> x) const {
    const TreeNode* n = &nodes_.front();
    while (!n->is_leaf()) n = &nodes_[static_cast<std::size_t>(x[static_cast<std::size_t>(n->feature)] < n->threshold ? n->left : n->right)];
    return n->value;
  }

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  std::size_t leaf_count() const {
    return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf(); }));
  }
  std::size_t depth() const { return depth_from(0); }

 private:
  std::size_t depth_from(int idx) const {
    const TreeNode& n = nodes_[static_cast<std::size_t>(idx)];
    if (n.is_leaf()) return 0;
    return 1 + std::max(depth_from(n.left), depth_from(n.right));
  }

  std::vector<TreeNode> nodes_;
};

/// Rows of a training set with, per feature, local row positions sorted by
/// (value, position). Built once per training set and reused across trees.
class TrainingMatrix {
 public:
  TrainingMatrix(const Dataset& data, std::span<const InstanceId> rows)
      : data_(&data), rows_(rows.begin(), rows.end()), sorted_(data.dim()) {
    for (std::size_t f = 0; f < data.dim(); ++f) {
      auto& order = sorted_[f];
      order.resize(rows_.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double va = value(a, f);
        const double vb = value(b, f);
        return va < vb || (va == vb && a < b);
      });
    }
  }

  std::size_t size() const { return rows_.size(); }
  std::size_t dim() const { return data_->dim(); }
  double value(std::size_t local, std::size_t f) const { return data_->at(rows_[local], f); }
  std::span<const double> row(std::size_t local) const { return data_->row(rows_[local]); }
  InstanceId id(std::size_t local) const { return rows_[local]; }
  const std::vector<InstanceId>& ids() const { return rows_; }
  const std::vector<std::size_t>& sorted(std::size_t f) const { return sorted_[f]; }
  const Dataset& data() const { return *data_; }

 private:
  const Dataset* data_;
  std::vector<InstanceId> rows_;
  std::vector<std::vector<std::size_t>> sorted_;
};

/// Second-order statistics for Newton boosting. Leaf value -G/(H+lambda),
/// split gain 1/2 [GL^2/(HL+l) + GR^2/(HR+l) - G^2/(H+l)] - gamma.
struct NewtonCriterion {
  struct Stat {
    double g = 0.0;
    double h = 0.0;
  };

  std::span<const double> grad;
  std::span<const double> hess;
  double lambda = 1.0;
  double gamma = 0.0;
  double min_child_weight = 1.0;

  Stat zero() const { return {}; }
  void add(Stat& s, std::size_t local) const {
    s.g += grad[local];
    s.h += hess[local];
  }
  Stat rest(const Stat& total, const Stat& left) const { return {total.g - left.g, total.h - left.h}; }
  bool admissible(const Stat& l, const Stat& r) const { return l.h >= min_child_weight && r.h >= min_child_weight; }
  double score(const Stat& s) const { return s.g * s.g / (s.h + lambda); }
  double gain(const Stat& l, const Stat& r, const Stat& parent) const {
    return 0.5 * (score(l) + score(r) - score(parent)) - gamma;
  }
  double leaf_value(const Stat& s) const { return -s.g / (s.h + lambda); }
};

/// Gini impurity decrease for classification trees; leaves hold the majority
/// class (ties to the lower class index) as a double.
struct GiniCriterion {
  struct Stat {
    std::vector<double> counts;
    double total = 0.0;
  };

  std::span<const ClassLabel> labels;  // by local position
  std::size_t classes = 2;

  Stat zero() const { return {std::vector<double>(classes, 0.0), 0.0}; }
  void add(Stat& s, std::size_t local) const {
    s.counts[static_cast<std::size_t>(labels[local])] += 1.0;
    s.total += 1.0;
  }
  Stat rest(const Stat& total, const Stat& left) const {
    Stat r = total;
    for (std::size_t c = 0; c < classes; ++c) r.counts[c] -= left.counts[c];
    r.total -= left.total;
    return r;
  }
  bool admissible(const Stat& l, const Stat& r) const { return l.total >= 1.0 && r.total >= 1.0; }
  static double weighted_impurity(const Stat& s) {
    if (s.total <= 0.0) return 0.0;
    double sq = 0.0;
    for (double c : s.counts) sq += c * c;
    return s.total - sq / s.total;  // total * gini
  }
  double gain(const Stat& l, const Stat& r, const Stat& parent) const {
    // Clip round-off so pure nodes never "improve".
    const double g = weighted_impurity(parent) - weighted_impurity(l) - weighted_impurity(r);
    return g > 1e-12 * std::max(1.0, parent.total) ? g : 0.0;
  }
  double leaf_value(const Stat& s) const {
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c)
      if (s.counts[c] > s.counts[best]) best = c;
    return static_cast<double>(best);
  }
};

/// Exact greedy growth, one level at a time. A node splits on the candidate
/// with the largest strictly positive gain; candidates are visited by feature
/// index then by ascending threshold, so ties keep the earliest. Thresholds
/// are midpoints between consecutive distinct values.
template <class Criterion>
RegTree grow_tree(const TrainingMatrix& m, const Criterion& crit, std::size_t max_depth) {
  using Stat = typename Criterion::Stat;
  const std::size_t n = m.size();
  require(n > 0, "cannot grow a tree on an empty training set");

  std::vector<TreeNode> nodes(1);
  std::vector<Stat> stats;
  stats.push_back(crit.zero());
  for (std::size_t i = 0; i < n; ++i) crit.add(stats[0], i);

  std::vector<int> position(n, 0);  // node of each row, -1 once it sits in a final leaf
  std::vector<int> frontier{0};

  struct Best {
    double gain = 0.0;
    int feature = -1;
    double threshold = 0.0;
    Stat left;
  };

  for (std::size_t depth = 0; depth < max_depth && !frontier.empty(); ++depth) {
    std::vector<int> slot(nodes.size(), -1);
    for (std::size_t s = 0; s < frontier.size(); ++s) slot[static_cast<std::size_t>(frontier[s])] = static_cast<int>(s);

    std::vector<Best> best(frontier.size());
    std::vector<Stat> running(frontier.size(), crit.zero());
    std::vector<double> last(frontier.size(), 0.0);
    std::vector<char> seen(frontier.size(), 0);

    for (std::size_t f = 0; f < m.dim(); ++f) {
      std::fill(running.begin(), running.end(), crit.zero());
      std::fill(seen.begin(), seen.end(), 0);
      for (std::size_t local : m.sorted(f)) {
        const int node = position[local];
        if (node < 0) continue;
        const int s = slot[static_cast<std::size_t>(node)];
        if (s < 0) continue;
        const auto si = static_cast<std::size_t>(s);
        const double v = m.value(local, f);
        if (seen[si] && v > last[si]) {
          const Stat& parent = stats[static_cast<std::size_t>(node)];
          const Stat right = crit.rest(parent, running[si]);
          if (crit.admissible(running[si], right)) {
            const double g = crit.gain(running[si], right, parent);
            if (g > best[si].gain) {
              double thr = last[si] + (v - last[si]) * 0.5;
              if (!(thr > last[si])) thr = v;
              best[si] = {g, static_cast<int>(f), thr, running[si]};
            }
          }
        }
        crit.add(running[si], local);
        last[si] = v;
        seen[si] = 1;
      }
    }

    std::vector<int> next;
    for (std::size_t s = 0; s < frontier.size(); ++s) {
      const int node = frontier[s];
      if (best[s].feature < 0) continue;
      const int l = static_cast<int>(nodes.size());
      const int r = l + 1;
      nodes.emplace_back();
      nodes.emplace_back();
      TreeNode& parent = nodes[static_cast<std::size_t>(node)];
      parent.feature = best[s].feature;
      parent.threshold = best[s].threshold;
      parent.left = l;
      parent.right = r;
      stats.push_back(best[s].left);
      stats.push_back(crit.rest(stats[static_cast<std::size_t>(node)], best[s].left));
      next.push_back(l);
      next.push_back(r);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const int node = position[i];
      if (node < 0) continue;
      const TreeNode& nd = nodes[static_cast<std::size_t>(node)];
      if (nd.is_leaf()) {
        position[i] = -1;
      } else {
        position[i] = m.value(i, static_cast<std::size_t>(nd.feature)) < nd.threshold ? nd.left : nd.right;
      }
    }
    frontier = std::move(next);
  }

  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].is_leaf()) nodes[i].value = crit.leaf_value(stats[i]);
  return RegTree(std::move(nodes));
}

/// Single CART classification tree (gini splits, depth cap).
class CartModel {
 public:
  CartModel() = default;
  CartModel(RegTree tree, std::size_t classes) : tree_(std::move(tree)), classes_(classes) {}

  ClassLabel predict(std::span<const double> x) const { return static_cast<ClassLabel>(tree_.predict(x)); }
  const RegTree& tree() const { return tree_; }
  std::size_t class_count() const { return classes_; }

 private:
  RegTree tree_;
  std::size_t classes_ = 2;
};

inline CartModel train_cart(const Pool& pool, std::span<const InstanceId> ids, std::size_t max_depth) {
  require(!ids.empty(), "CART needs at least one labeled instance");
  TrainingMatrix m(pool.data(), ids);
  std::vector<ClassLabel> labels;
  labels.reserve(ids.size());
  for (InstanceId id : ids) labels.push_back(pool.label_of(id));
  GiniCriterion crit{labels, pool.class_count()};
  return CartModel(grow_tree(m, crit, max_depth), pool.class_count());
}

}  // namespace lts
