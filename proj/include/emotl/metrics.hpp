#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "emotl/errors.hpp"

namespace emotl {

// counts[g][p]: examples with gold class g predicted as p.
struct ConfusionMatrix {
  std::vector<std::vector<std::size_t>> counts;

  std::size_t num_classes() const { return counts.size(); }
  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& row : counts)
      for (std::size_t v : row) n += v;
    return n;
  }
};

namespace detail {
inline void check_label_sequences(std::span<const std::size_t> predictions, std::span<const std::size_t> golds,
                                  std::size_t num_classes) {
  if (predictions.empty() || golds.empty()) throw ContractViolation("metrics over an empty sequence");
  if (predictions.size() != golds.size())
    throw ContractViolation("prediction and gold sequences differ in length (" + std::to_string(predictions.size()) +
                            " vs " + std::to_string(golds.size()) + ")");
  for (std::size_t i = 0; i < golds.size(); ++i)
    if (predictions[i] >= num_classes || golds[i] >= num_classes)
      throw ContractViolation("label out of range at position " + std::to_string(i));
}
}  // namespace detail

inline ConfusionMatrix confusion_matrix(std::span<const std::size_t> predictions, std::span<const std::size_t> golds,
                                        std::size_t num_classes) {
  detail::check_label_sequences(predictions, golds, num_classes);
  ConfusionMatrix cm{std::vector<std::vector<std::size_t>>(num_classes, std::vector<std::size_t>(num_classes, 0))};
  for (std::size_t i = 0; i < golds.size(); ++i) ++cm.counts[golds[i]][predictions[i]];
  return cm;
}

// F1 per class; 0 whenever precision + recall is 0 or undefined.
inline std::vector<double> per_class_f1(const ConfusionMatrix& cm) {
  const std::size_t c = cm.num_classes();
  std::vector<double> f1(c, 0.0);
  for (std::size_t k = 0; k < c; ++k) {
    std::size_t tp = cm.counts[k][k], predicted = 0, actual = 0;
    for (std::size_t j = 0; j < c; ++j) {
      predicted += cm.counts[j][k];
      actual += cm.counts[k][j];
    }
    if (tp == 0) continue;
    const double precision = static_cast<double>(tp) / static_cast<double>(predicted);
    const double recall = static_cast<double>(tp) / static_cast<double>(actual);
    f1[k] = 2.0 * precision * recall / (precision + recall);
  }
  return f1;
}

// Unweighted mean of per-class F1 over all `num_classes` classes.
inline double macro_f1(std::span<const std::size_t> predictions, std::span<const std::size_t> golds, std::size_t num_classes) {
  const auto f1 = per_class_f1(confusion_matrix(predictions, golds, num_classes));
  double s = 0.0;
  for (double v : f1) s += v;
  return s / static_cast<double>(num_classes);
}

inline double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> golds) {
  if (predictions.size() != golds.size() || golds.empty()) throw ContractViolation("accuracy needs equal non-empty sequences");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < golds.size(); ++i) hit += predictions[i] == golds[i];
  return static_cast<double>(hit) / static_cast<double>(golds.size());
}

}  // namespace emotl
