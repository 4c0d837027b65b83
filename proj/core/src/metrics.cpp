#include "evostack/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace evostack {

BinaryMetrics binary_metrics(const ConfusionCounts& c) {
  if (c.total() == 0)
    throw ValidationError("metrics over zero evaluated items");
  const double tp = static_cast<double>(c.tp);
  const double fp = static_cast<double>(c.fp);
  const double tn = static_cast<double>(c.tn);
  const double fn = static_cast<double>(c.fn);

  BinaryMetrics m;
  m.accuracy = (tp + tn) / static_cast<double>(c.total());
  m.precision = (tp + fp) > 0.0 ? tp / (tp + fp) : 0.0;
  m.recall = (tp + fn) > 0.0 ? tp / (tp + fn) : 0.0;
  m.f1 = (m.precision + m.recall) > 0.0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  const double denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  m.mcc = denom > 0.0 ? (tp * tn - fp * fn) / std::sqrt(denom) : 0.0;
  return m;
}

double f1_score(const ConfusionCounts& c) { return binary_metrics(c).f1; }

double macro_f1(std::span<const ConfusionCounts> per_label) {
  if (per_label.empty()) throw ValidationError("macro_f1 over zero labels");
  double sum = 0.0;
  for (const auto& c : per_label) sum += f1_score(c);
  return sum / static_cast<double>(per_label.size());
}

FoldAssignment stratified_kfold(std::span<const std::uint16_t> labels, int k,
                                std::uint64_t seed) {
  if (k < 2) throw ValidationError("fold count must be >= 2");
  if (static_cast<std::size_t>(k) > labels.size())
    throw ValidationError("fold count " + std::to_string(k) +
                          " exceeds item count " +
                          std::to_string(labels.size()));

  // Group item indices per class in encounter order.
  std::map<std::uint16_t, std::vector<int>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i)
    by_class[labels[i]].push_back(static_cast<int>(i));

  FoldAssignment fa;
  fa.k = k;
  fa.fold_of.assign(labels.size(), -1);

  RngStream rng = RngStream(seed).derive("stratified_kfold");
  // Stagger each class's starting fold by the items already placed so the
  // overall fold sizes stay balanced too.
  std::size_t placed = 0;
  for (auto& [cls, items] : by_class) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = rng.uniform_index(i);
      std::swap(items[i - 1], items[j]);
    }
    const int start = static_cast<int>(placed % static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < items.size(); ++i)
      fa.fold_of[items[i]] =
          (start + static_cast<int>(i)) % k;
    placed += items.size();
  }
  return fa;
}

std::vector<int> fold_train_indices(const FoldAssignment& fa, int fold) {
  std::vector<int> out;
  for (std::size_t i = 0; i < fa.fold_of.size(); ++i)
    if (fa.fold_of[i] != fold) out.push_back(static_cast<int>(i));
  return out;
}

std::vector<int> fold_test_indices(const FoldAssignment& fa, int fold) {
  std::vector<int> out;
  for (std::size_t i = 0; i < fa.fold_of.size(); ++i)
    if (fa.fold_of[i] == fold) out.push_back(static_cast<int>(i));
  return out;
}

}  // namespace evostack
