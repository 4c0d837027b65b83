#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "evostack/util.hpp"

namespace evostack {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const { return tp + fp + tn + fn; }
  void add(bool predicted, bool actual) {
    if (predicted && actual) ++tp;
    else if (predicted && !actual) ++fp;
    else if (!predicted && actual) ++fn;
    else ++tn;
  }
};

struct BinaryMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double mcc = 0.0;
};

// Standard definitions; precision/recall/F1 are 0 when their denominator is
// 0, MCC is 0 when any of its four factors is 0.
BinaryMetrics binary_metrics(const ConfusionCounts& c);

double f1_score(const ConfusionCounts& c);

// Unweighted mean of per-label F1.
double macro_f1(std::span<const ConfusionCounts> per_label);

struct FoldAssignment {
  std::vector<int> fold_of;  // one fold index per item
  int k = 0;
};

// Per-class round-robin assignment after a seeded shuffle; for every class
// the per-fold counts differ by at most 1. Deterministic given the seed.
FoldAssignment stratified_kfold(std::span<const std::uint16_t> labels, int k,
                                std::uint64_t seed);

std::vector<int> fold_train_indices(const FoldAssignment& fa, int fold);
std::vector<int> fold_test_indices(const FoldAssignment& fa, int fold);

}  // namespace evostack
