#pragma once

// Instances, the simulated oracle, pool bookkeeping, CSV ingestion,
// synthetic pools and the feature-grid partition used for diversity.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lts/common.hpp"

namespace lts {

using InstanceId = std::size_t;
using ClassLabel = int;

/// Read-only view of one row of a dataset.
struct Instance {
  InstanceId id;
  std::span<const double> features;
};

/// Immutable feature matrix plus ground-truth labels (the simulated oracle's
/// answer key). Rows are dense ids 0..size()-1.
class Dataset {
 public:
  Dataset(std::size_t dim, std::vector<double> features, std::vector<ClassLabel> labels,
          std::vector<std::string> class_names)
      : dim_(dim),
        features_(std::move(features)),
        labels_(std::move(labels)),
        class_names_(std::move(class_names)) {
    require(dim_ >= 1, "dataset dimensionality must be >= 1");
    require(features_.size() == dim_ * labels_.size(), "feature matrix does not match label count");
    require(class_names_.size() >= 2, "dataset needs at least two classes");
    for (ClassLabel y : labels_)
      require(y >= 0 && static_cast<std::size_t>(y) < class_names_.size(), "label out of range");
  }

  std::size_t size() const { return labels_.size(); }
  std::size_t dim() const { return dim_; }
  std::size_t class_count() const { return class_names_.size(); }
  const std::vector<std::string>& class_names() const { return class_names_; }

  std::span<const double> row(InstanceId id) const { return {features_.data() + id * dim_, dim_}; }
  double at(InstanceId id, std::size_t feature) const { return features_[id * dim_ + feature]; }
  Instance instance(InstanceId id) const { return {id, row(id)}; }
  ClassLabel truth(InstanceId id) const { return labels_[id]; }
  const std::vector<ClassLabel>& truths() const { return labels_; }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(class_count(), 0);
    for (ClassLabel y : labels_) ++counts[static_cast<std::size_t>(y)];
    return counts;
  }

  /// Class with the fewest instances; ties go to the higher class index so a
  /// balanced binary pool uses class 1 as positive.
  ClassLabel minority_class() const {
    const auto counts = class_counts();
    std::size_t best = 0;
    for (std::size_t c = 1; c < counts.size(); ++c)
      if (counts[c] <= counts[best]) best = c;
    return static_cast<ClassLabel>(best);
  }

 private:
  std::size_t dim_;
  std::vector<double> features_;
  std::vector<ClassLabel> labels_;
  std::vector<std::string> class_names_;
};

/// A working partition of a dataset: its member ids, split into labeled and
/// unlabeled sides, with an oracle that charges one unit of budget the first
/// time each id is queried.
class Pool {
 public:
  explicit Pool(std::shared_ptr<const Dataset> data)
      : Pool(data, [&] {
          std::vector<InstanceId> all(data->size());
          std::iota(all.begin(), all.end(), InstanceId{0});
          return all;
        }()) {}

  Pool(std::shared_ptr<const Dataset> data, std::vector<InstanceId> members)
      : data_(std::move(data)), members_(std::move(members)), state_(data_->size(), kAbsent) {
    std::sort(members_.begin(), members_.end());
    for (InstanceId id : members_) {
      require(id < data_->size(), "pool member out of range");
      require(state_[id] == kAbsent, "duplicate pool member");
      state_[id] = kUnlabeled;
    }
    unlabeled_count_ = members_.size();
  }

  const Dataset& data() const { return *data_; }
  std::shared_ptr<const Dataset> shared_data() const { return data_; }
  std::size_t size() const { return members_.size(); }
  std::size_t dim() const { return data_->dim(); }
  std::size_t class_count() const { return data_->class_count(); }
  const std::vector<InstanceId>& members() const { return members_; }

  bool contains(InstanceId id) const { return id < state_.size() && state_[id] != kAbsent; }
  bool is_labeled(InstanceId id) const { return id < state_.size() && state_[id] == kLabeled; }
  bool is_unlabeled(InstanceId id) const { return id < state_.size() && state_[id] == kUnlabeled; }

  /// Labeled ids in acquisition order.
  const std::vector<InstanceId>& labeled_ids() const { return labeled_; }
  std::size_t unlabeled_count() const { return unlabeled_count_; }

  /// Unlabeled member ids in ascending order.
  std::vector<InstanceId> unlabeled_ids() const {
    std::vector<InstanceId> out;
    out.reserve(unlabeled_count_);
    for (InstanceId id : members_)
      if (state_[id] == kUnlabeled) out.push_back(id);
    return out;
  }

  std::size_t consumed_budget() const { return labeled_.size(); }
  std::optional<std::size_t> budget_cap() const { return budget_cap_; }
  void set_budget_cap(std::size_t cap) {
    require(cap >= labeled_.size(), "budget cap below consumed budget");
    budget_cap_ = cap;
  }

  /// Asks the oracle for the label of `id`. Repeat queries are free.
  ClassLabel query(InstanceId id) {
    require(contains(id), "oracle query for an id outside the pool");
    if (state_[id] == kUnlabeled) {
      if (budget_cap_ && labeled_.size() >= *budget_cap_)
        throw ContractError("label budget exhausted");
      state_[id] = kLabeled;
      labeled_.push_back(id);
      --unlabeled_count_;
    }
    return data_->truth(id);
  }

  /// Label of an already labeled id; never consumes budget.
  ClassLabel label_of(InstanceId id) const {
    require(is_labeled(id), "label requested for an unlabeled id");
    return data_->truth(id);
  }

  /// Fresh copy with every member unlabeled and no budget consumed.
  Pool reset() const { return Pool(data_, members_); }

 private:
  static constexpr unsigned char kAbsent = 0;
  static constexpr unsigned char kUnlabeled = 1;
  static constexpr unsigned char kLabeled = 2;

  std::shared_ptr<const Dataset> data_;
  std::vector<InstanceId> members_;
  std::vector<unsigned char> state_;
  std::vector<InstanceId> labeled_;
  std::size_t unlabeled_count_ = 0;
  std::optional<std::size_t> budget_cap_;
};

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      cells.push_back(trim(line.substr(start, i - start)));
      start = i + 1;
    }
  }
  return cells;
}

inline std::optional<double> parse_real(std::string_view s) {
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace detail

/// Parses CSV text with a header row. Labels are mapped to 0..C-1 in order of
/// first appearance; `feature_columns`, when given, selects and orders the
/// feature columns, otherwise every non-label column is a feature.
inline Dataset parse_csv(std::istream& in, const std::string& label_column,
                         const std::optional<std::vector<std::string>>& feature_columns = std::nullopt) {
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      if (!detail::trim(line).empty()) return true;
    }
    return false;
  };
  if (!next_line()) throw DataError("csv: empty file");

  std::vector<std::string> header;
  for (auto cell : detail::split_csv_line(line)) header.emplace_back(cell);

  auto column_index = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("csv: column '" + name + "' not found in header");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t label_idx = column_index(label_column);

  std::vector<std::size_t> feature_idx;
  if (feature_columns) {
    for (const auto& name : *feature_columns) {
      const std::size_t idx = column_index(name);
      if (idx == label_idx) throw DataError("csv: label column listed as a feature");
      feature_idx.push_back(idx);
    }
  } else {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (i != label_idx) feature_idx.push_back(i);
  }
  if (feature_idx.empty()) throw DataError("csv: no feature columns");

  std::vector<double> features;
  std::vector<ClassLabel> labels;
  std::vector<std::string> class_names;
  std::map<std::string, ClassLabel, std::less<>> class_of;

  while (next_line()) {
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw DataError("csv: row at line " + std::to_string(line_no) + " has " +
                      std::to_string(cells.size()) + " cells, header has " + std::to_string(header.size()));
    for (std::size_t idx : feature_idx) {
      const auto v = detail::parse_real(cells[idx]);
      if (!v)
        throw DataError("csv: line " + std::to_string(line_no) + ", column '" + header[idx] +
                        "': cannot parse '" + std::string(cells[idx]) + "' as a real number");
      features.push_back(*v);
    }
    const std::string_view label = cells[label_idx];
    if (label.empty())
      throw DataError("csv: line " + std::to_string(line_no) + ", column '" + header[label_idx] +
                      "': missing label");
    auto it = class_of.find(label);
    if (it == class_of.end()) {
      it = class_of.emplace(std::string(label), static_cast<ClassLabel>(class_names.size())).first;
      class_names.emplace_back(label);
    }
    labels.push_back(it->second);
  }
  if (labels.empty()) throw DataError("csv: no data rows");
  if (class_names.size() < 2) throw DataError("csv: label column has a single class");
  return Dataset(feature_idx.size(), std::move(features), std::move(labels), std::move(class_names));
}

inline Pool load_csv(const std::string& path, const std::string& label_column,
                     const std::optional<std::vector<std::string>>& feature_columns = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw DataError("csv: cannot open '" + path + "'");
  return Pool(std::make_shared<const Dataset>(parse_csv(in, label_column, feature_columns)));
}

// ---------------------------------------------------------------------------
// Synthetic pools
// ---------------------------------------------------------------------------

struct GaussianCluster {
  std::vector<double> mean;
  double stddev = 1.0;
  std::string label;
  std::size_t count = 0;
};

/// Isotropic Gaussian clusters emitted cluster by cluster. Class names are
/// ordered by first appearance in the cluster list.
inline Dataset gen_synthetic_dataset(const std::vector<GaussianCluster>& clusters, std::uint64_t seed) {
  if (clusters.empty()) throw DataError("synthetic: empty cluster list");
  const std::size_t dim = clusters.front().mean.size();
  if (dim == 0) throw DataError("synthetic: cluster mean must have at least one coordinate");

  std::vector<std::string> class_names;
  std::size_t total = 0;
  for (const auto& c : clusters) {
    if (c.mean.size() != dim) throw DataError("synthetic: clusters disagree on dimensionality");
    if (!(c.stddev > 0.0) || !std::isfinite(c.stddev)) throw DataError("synthetic: stddev must be > 0");
    if (c.count == 0) throw DataError("synthetic: cluster count must be >= 1");
    if (std::find(class_names.begin(), class_names.end(), c.label) == class_names.end())
      class_names.push_back(c.label);
    total += c.count;
  }
  if (class_names.size() < 2) throw DataError("synthetic: at least two classes are required");

  Rng rng(seed);
  std::vector<double> features;
  features.reserve(total * dim);
  std::vector<ClassLabel> labels;
  labels.reserve(total);
  for (const auto& c : clusters) {
    const auto label = static_cast<ClassLabel>(
        std::find(class_names.begin(), class_names.end(), c.label) - class_names.begin());
    for (std::size_t i = 0; i < c.count; ++i) {
      for (std::size_t f = 0; f < dim; ++f) features.push_back(c.mean[f] + c.stddev * standard_normal(rng));
      labels.push_back(label);
    }
  }
  return Dataset(dim, std::move(features), std::move(labels), std::move(class_names));
}

inline Pool gen_synthetic(const std::vector<GaussianCluster>& clusters, std::uint64_t seed) {
  return Pool(std::make_shared<const Dataset>(gen_synthetic_dataset(clusters, seed)));
}

/// Writes a dataset as CSV (f0..f{d-1},label) readable by load_csv.
inline void write_csv(std::ostream& out, const Dataset& data, const std::string& label_column = "label") {
  for (std::size_t f = 0; f < data.dim(); ++f) out << 'f' << f << ',';
  out << label_column << '\n';
  char buf[32];
  for (InstanceId id = 0; id < data.size(); ++id) {
    for (double v : data.row(id)) {
      const auto res = std::to_chars(buf, buf + sizeof buf, v);
      out.write(buf, res.ptr - buf);
      out << ',';
    }
    out << data.class_names()[static_cast<std::size_t>(data.truth(id))] << '\n';
  }
}

// ---------------------------------------------------------------------------
// Train/test split
// ---------------------------------------------------------------------------

struct SplitConfig {
  double test_fraction = 0.3;
  std::uint64_t rng_seed = 0;
};

struct TrainTestSplit {
  Pool train;
  std::vector<InstanceId> test_ids;  // ascending
};

/// Stratified holdout. Total test size is round(fraction * |pool|); per-class
/// shares are allocated by largest remainder (ties to the lower class).
inline TrainTestSplit split_train_test(const Pool& pool, const SplitConfig& cfg) {
  if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0))
    throw ContractError("test_fraction must lie in (0,1)");
  require(pool.size() > 0, "cannot split an empty pool");

  const std::size_t classes = pool.class_count();
  std::vector<std::vector<InstanceId>> by_class(classes);
  for (InstanceId id : pool.members()) by_class[static_cast<std::size_t>(pool.data().truth(id))].push_back(id);

  const auto test_total = static_cast<std::size_t>(std::llround(cfg.test_fraction * static_cast<double>(pool.size())));
  std::vector<std::size_t> quota(classes);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    const double exact = cfg.test_fraction * static_cast<double>(by_class[c].size());
    quota[c] = static_cast<std::size_t>(std::floor(exact));
    assigned += quota[c];
    remainders.emplace_back(exact - std::floor(exact), c);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < test_total && i < remainders.size(); ++i) {
    const std::size_t c = remainders[i].second;
    if (quota[c] < by_class[c].size()) {
      ++quota[c];
      ++assigned;
    }
  }

  Rng rng(cfg.rng_seed);
  std::vector<InstanceId> train_ids;
  std::vector<InstanceId> test_ids;
  for (std::size_t c = 0; c < classes; ++c) {
    auto& ids = by_class[c];
    for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[uniform_index(rng, i)]);
    test_ids.insert(test_ids.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(quota[c]));
    train_ids.insert(train_ids.end(), ids.begin() + static_cast<std::ptrdiff_t>(quota[c]), ids.end());
  }
  std::sort(test_ids.begin(), test_ids.end());
  return {Pool(pool.shared_data(), std::move(train_ids)), std::move(test_ids)};
}

// ---------------------------------------------------------------------------
// Feature-grid groups
// ---------------------------------------------------------------------------

/// c = ceil((budget / iterations)^(1/d)); the implied grid holds c^d cells.
inline std::size_t bins_per_feature(std::size_t budget, std::size_t iterations, std::size_t dims) {
  require(iterations >= 1, "iterations must be >= 1");
  require(dims >= 1, "grouped dimensionality must be >= 1");
  require(budget >= iterations, "budget must be >= iterations");
  const double per_iter = static_cast<double>(budget) / static_cast<double>(iterations);
  auto c = static_cast<std::size_t>(std::ceil(std::pow(per_iter, 1.0 / static_cast<double>(dims))));
  c = std::max<std::size_t>(c, 1);
  // pow/ceil can land one off at exact powers; settle on the smallest c with c^d >= per_iter.
  auto covers = [&](std::size_t cand) {
    double p = 1.0;
    for (std::size_t i = 0; i < dims; ++i) p *= static_cast<double>(cand);
    return p >= per_iter * (1.0 - 1e-12);
  };
  while (c > 1 && covers(c - 1)) --c;
  while (!covers(c)) ++c;
  return c;
}

inline std::size_t group_capacity(std::size_t bins, std::size_t dims) {
  std::size_t k = 1;
  for (std::size_t i = 0; i < dims; ++i) k *= bins;
  return k;
}

struct GroupPartition {
  std::size_t bins_per_feature = 1;
  std::vector<std::size_t> grouped_features;
  std::vector<double> lower;  // per grouped feature
  std::vector<double> width;  // per grouped feature; 0 for a constant feature
  std::vector<int> group_of;  // indexed by dataset id; -1 outside the pool
  std::vector<std::size_t> group_sizes;

  std::size_t group_count() const { return group_sizes.size(); }
  int group(InstanceId id) const { return group_of.at(id); }
};

/// Equal-width grid over the highest-variance features. Uses the largest d'
/// such that c(d')^d' <= max_groups; with d'=1 and c > max_groups the bin
/// count is capped at max_groups.
inline GroupPartition partition_groups(const Pool& pool, std::size_t budget, std::size_t iterations,
                                       std::size_t max_groups = 4096) {
  require(pool.size() > 0, "cannot partition an empty pool");
  require(max_groups >= 1, "max_groups must be >= 1");
  const Dataset& data = pool.data();
  const std::size_t dim = data.dim();
  const auto& ids = pool.members();
  const double n = static_cast<double>(ids.size());

  std::vector<double> variance(dim, 0.0);
  for (std::size_t f = 0; f < dim; ++f) {
    double mean = 0.0;
    for (InstanceId id : ids) mean += data.at(id, f);
    mean /= n;
    double ss = 0.0;
    for (InstanceId id : ids) {
      const double dlt = data.at(id, f) - mean;
      ss += dlt * dlt;
    }
    variance[f] = ss / n;
  }
  std::vector<std::size_t> order(dim);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return variance[a] > variance[b]; });

  std::size_t used = 1;
  std::size_t bins = std::min(bins_per_feature(budget, iterations, 1), max_groups);
  for (std::size_t d = dim; d >= 2; --d) {
    const std::size_t c = bins_per_feature(budget, iterations, d);
    double k = 1.0;
    for (std::size_t i = 0; i < d; ++i) k *= static_cast<double>(c);
    if (k <= static_cast<double>(max_groups)) {
      used = d;
      bins = c;
      break;
    }
  }

  GroupPartition part;
  part.bins_per_feature = bins;
  part.grouped_features.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(used));
  for (std::size_t f : part.grouped_features) {
    double lo = data.at(ids.front(), f);
    double hi = lo;
    for (InstanceId id : ids) {
      lo = std::min(lo, data.at(id, f));
      hi = std::max(hi, data.at(id, f));
    }
    part.lower.push_back(lo);
    part.width.push_back(bins > 1 ? (hi - lo) / static_cast<double>(bins) : 0.0);
  }

  auto cell_code = [&](InstanceId id) {
    std::uint64_t code = 0;
    for (std::size_t j = 0; j < used; ++j) {
      std::size_t bin = 0;
      if (part.width[j] > 0.0) {
        const double pos = (data.at(id, part.grouped_features[j]) - part.lower[j]) / part.width[j];
        bin = std::min(static_cast<std::size_t>(std::max(pos, 0.0)), bins - 1);
      }
      code = code * bins + bin;
    }
    return code;
  };

  std::vector<std::uint64_t> codes;
  codes.reserve(ids.size());
  for (InstanceId id : ids) codes.push_back(cell_code(id));
  std::vector<std::uint64_t> occupied = codes;
  std::sort(occupied.begin(), occupied.end());
  occupied.erase(std::unique(occupied.begin(), occupied.end()), occupied.end());

  part.group_of.assign(data.size(), -1);
  part.group_sizes.assign(occupied.size(), 0);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto g = static_cast<std::size_t>(std::lower_bound(occupied.begin(), occupied.end(), codes[i]) - occupied.begin());
    part.group_of[ids[i]] = static_cast<int>(g);
    ++part.group_sizes[g];
  }
  return part;
}

}  // namespace lts
