#include <doctest.h>

TEST_SUITE_BEGIN("metrics");

#include <cmath>
#include <map>

#include "evostack/metrics.hpp"
#include "evostack/util.hpp"

using namespace evostack;

namespace {

// Independent recomputation, straight from the definitions.
struct OracleMetrics {
  double accuracy, precision, recall, f1, mcc;
};

OracleMetrics oracle(const ConfusionCounts& c) {
  const double tp = c.tp, fp = c.fp, tn = c.tn, fn = c.fn;
  OracleMetrics m{};
  m.accuracy = (tp + tn) / (tp + fp + tn + fn);
  m.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  m.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  m.f1 = m.precision + m.recall > 0
             ? 2 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  const double d = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  m.mcc = d > 0 ? (tp * tn - fp * fn) / std::sqrt(d) : 0.0;
  return m;
}

ConfusionCounts random_counts(RngStream& rng) {
  return ConfusionCounts{rng.next_u64() % 50, rng.next_u64() % 50,
                         rng.next_u64() % 50, rng.next_u64() % 50};
}

}  // namespace

TEST_CASE("perfect predictions score 1 everywhere") {
  const auto m = binary_metrics({10, 0, 10, 0});
  CHECK(m.accuracy == 1.0);
  CHECK(m.precision == 1.0);
  CHECK(m.recall == 1.0);
  CHECK(m.f1 == 1.0);
  CHECK(m.mcc == 1.0);
}

TEST_CASE("constant positive classifier on balanced data has zero MCC") {
  const auto m = binary_metrics({10, 10, 0, 0});
  CHECK(m.mcc == 0.0);
  CHECK(m.accuracy == 0.5);
}

TEST_CASE("hand-evaluated counts (6,8,2,4)") {
  const auto m = binary_metrics({6, 2, 8, 4});
  CHECK(m.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(m.mcc == doctest::Approx(40.0 / std::sqrt(9600.0)).epsilon(1e-12));
  CHECK(m.mcc == doctest::Approx(0.408).epsilon(0.002));
}

TEST_CASE("empty confusion counts are rejected") {
  CHECK_THROWS_AS(binary_metrics({0, 0, 0, 0}), ValidationError);
}

TEST_CASE("metrics match the oracle on 1000 random confusion sets") {
  RngStream rng(21);
  for (int i = 0; i < 1000; ++i) {
    ConfusionCounts c = random_counts(rng);
    if (c.total() == 0) c.tn = 1;
    const auto m = binary_metrics(c);
    const auto o = oracle(c);
    CHECK(m.accuracy == o.accuracy);
    CHECK(m.precision == o.precision);
    CHECK(m.recall == o.recall);
    CHECK(m.f1 == o.f1);
    CHECK(m.mcc == o.mcc);
    CHECK(m.mcc >= -1.0);
    CHECK(m.mcc <= 1.0);
  }
}

TEST_CASE("f1 is the harmonic mean of precision and recall") {
  RngStream rng(22);
  for (int i = 0; i < 1000; ++i) {
    ConfusionCounts c = random_counts(rng);
    if (c.total() == 0) c.tn = 1;
    const auto m = binary_metrics(c);
    if (m.precision > 0 && m.recall > 0)
      CHECK(m.f1 == doctest::Approx(2.0 / (1.0 / m.precision +
                                           1.0 / m.recall))
                        .epsilon(1e-12));
  }
}

TEST_CASE("macro F1 basics") {
  CHECK(macro_f1(std::vector<ConfusionCounts>{{5, 0, 5, 0},
                                              {3, 0, 7, 0}}) == 1.0);
  CHECK(macro_f1(std::vector<ConfusionCounts>{{5, 0, 5, 0},
                                              {0, 3, 7, 5}}) == 0.5);
}

TEST_CASE("macro F1 matches item-by-item recomputation") {
  RngStream rng(23);
  std::vector<ConfusionCounts> sets;
  double expect = 0.0;
  for (int i = 0; i < 10; ++i) {
    ConfusionCounts c = random_counts(rng);
    if (c.total() == 0) c.tn = 1;
    expect += oracle(c).f1;
    sets.push_back(c);
  }
  CHECK(macro_f1(sets) == doctest::Approx(expect / 10.0).epsilon(1e-12));
}

TEST_CASE("stratified folds split evenly when divisible") {
  std::vector<std::uint16_t> labels(10, 0);
  const auto fa = stratified_kfold(labels, 5, 99);
  int per_fold[5] = {0};
  for (int f : fa.fold_of) ++per_fold[f];
  for (int c : per_fold) CHECK(c == 2);
}

TEST_CASE("per-class fold counts differ by at most one") {
  std::vector<std::uint16_t> labels;
  for (int i = 0; i < 7; ++i) labels.push_back(0);
  for (int i = 0; i < 5; ++i) labels.push_back(1);
  const auto fa = stratified_kfold(labels, 5, 7);

  std::map<std::pair<int, int>, int> counts;  // (class, fold) -> count
  for (std::size_t i = 0; i < labels.size(); ++i)
    ++counts[{labels[i], fa.fold_of[i]}];
  for (int cls = 0; cls <= 1; ++cls) {
    int lo = 1 << 20, hi = 0;
    for (int f = 0; f < 5; ++f) {
      const int c = counts[{cls, f}];
      lo = std::min(lo, c);
      hi = std::max(hi, c);
    }
    CHECK(hi - lo <= 1);
  }
}

TEST_CASE("fold assignment is deterministic in the seed") {
  std::vector<std::uint16_t> labels;
  RngStream rng(24);
  for (int i = 0; i < 40; ++i)
    labels.push_back(static_cast<std::uint16_t>(rng.uniform_index(3)));
  const auto a = stratified_kfold(labels, 5, 1234);
  const auto b = stratified_kfold(labels, 5, 1234);
  CHECK(a.fold_of == b.fold_of);
  const auto c = stratified_kfold(labels, 5, 1235);
  CHECK(a.fold_of != c.fold_of);
}

TEST_CASE("fold partition and balance hold for 1000 random label sets") {
  RngStream rng(25);
  for (int trial = 0; trial < 1000; ++trial) {
    const int classes = 1 + static_cast<int>(rng.uniform_index(4));
    const int n = 8 + static_cast<int>(rng.uniform_index(40));
    std::vector<std::uint16_t> labels;
    for (int i = 0; i < n; ++i)
      labels.push_back(
          static_cast<std::uint16_t>(rng.uniform_index(classes)));
    const int k = 2 + static_cast<int>(rng.uniform_index(4));
    const auto fa = stratified_kfold(labels, k, rng.next_u64());

    REQUIRE(fa.fold_of.size() == labels.size());
    std::map<std::pair<int, int>, int> counts;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      REQUIRE(fa.fold_of[i] >= 0);
      REQUIRE(fa.fold_of[i] < k);
      ++counts[{labels[i], fa.fold_of[i]}];
    }
    for (int cls = 0; cls < classes; ++cls) {
      int lo = 1 << 20, hi = 0;
      for (int f = 0; f < k; ++f) {
        const int c = counts.contains({cls, f}) ? counts[{cls, f}] : 0;
        lo = std::min(lo, c);
        hi = std::max(hi, c);
      }
      if (hi > 0) CHECK(hi - lo <= 1);
    }
  }
}

TEST_CASE("fold count bounds are validated") {
  std::vector<std::uint16_t> labels(4, 0);
  CHECK_THROWS_AS(stratified_kfold(labels, 1, 0), ValidationError);
  CHECK_THROWS_AS(stratified_kfold(labels, 5, 0), ValidationError);
}

TEST_SUITE_END();
