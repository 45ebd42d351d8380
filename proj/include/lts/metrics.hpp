#pragma once

#include <span>
#include <vector>

#include "lts/common.hpp"
#include "lts/dataset.hpp"

namespace lts {

struct MetricsSnapshot {
  double accuracy = 0.0;
  double precision = 0.0;  // for the positive class
  double recall = 0.0;
  double fm = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  ClassLabel positive = 1;
  std::vector<double> class_precision;
  std::vector<double> class_recall;

  bool operator==(const MetricsSnapshot&) const = default;
};

inline double safe_ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

/// F-measure from precision and recall; 0 when both are 0.
inline double f_measure(double precision, double recall) {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

/// Exact counts. A precision or recall with a zero denominator is 0, and so
/// is FM when P + R = 0 (a model that never predicts the positive class).
inline MetricsSnapshot compute_metrics(std::span<const ClassLabel> predicted, std::span<const ClassLabel> truth,
                                       ClassLabel positive, std::size_t classes) {
  require(predicted.size() == truth.size(), "prediction and truth lengths differ");
  require(!truth.empty(), "metrics need at least one instance");
  require(classes >= 2 && positive >= 0 && static_cast<std::size_t>(positive) < classes, "bad positive class");

  MetricsSnapshot m;
  m.positive = positive;
  std::vector<std::size_t> hit(classes, 0), predicted_as(classes, 0), actual(classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto p = static_cast<std::size_t>(predicted[i]);
    const auto t = static_cast<std::size_t>(truth[i]);
    require(p < classes && t < classes, "label out of range");
    ++predicted_as[p];
    ++actual[t];
    if (p == t) {
      ++hit[t];
      ++correct;
    }
    const bool pp = predicted[i] == positive;
    const bool tp = truth[i] == positive;
    if (pp && tp) ++m.tp;
    else if (pp) ++m.fp;
    else if (tp) ++m.fn;
    else ++m.tn;
  }
  m.accuracy = safe_ratio(correct, truth.size());
  m.precision = safe_ratio(m.tp, m.tp + m.fp);
  m.recall = safe_ratio(m.tp, m.tp + m.fn);
  m.fm = f_measure(m.precision, m.recall);
  for (std::size_t c = 0; c < classes; ++c) {
    m.class_precision.push_back(safe_ratio(hit[c], predicted_as[c]));
    m.class_recall.push_back(safe_ratio(hit[c], actual[c]));
  }
  return m;
}

}  // namespace lts
