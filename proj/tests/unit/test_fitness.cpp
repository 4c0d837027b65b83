#include <doctest.h>

TEST_SUITE_BEGIN("fitness");

#include <cmath>

#include "evostack/fitness.hpp"
#include "oracles.hpp"

using namespace evostack;

namespace {

Chromosome chrom(std::initializer_list<LayerGene> genes) {
  Chromosome c;
  c.layers = genes;
  return c;
}

// Labels are a deterministic function of one input pixel: pixel (0,0) is
// saturated for class 1 and dark for class 0, rest is mild noise.
TensorDataset pixel_rule_dataset(int n, std::uint64_t seed) {
  TensorDataset data;
  data.channels = 1;
  data.height = 8;
  data.width = 8;
  data.kind = TargetKind::Binary;
  data.label_width = 1;
  RngStream rng(seed);
  for (int i = 0; i < n; ++i) {
    const std::uint16_t label = i % 2;
    for (int p = 0; p < 64; ++p)
      data.images.push_back(static_cast<float>(rng.uniform_real(0.4, 0.6)));
    data.images[static_cast<std::size_t>(i) * 64] =
        label == 1 ? 1.0f : 0.0f;
    data.labels.push_back(label);
    ++data.n;
  }
  return data;
}

FixedHyperparams tiny_fixed() {
  FixedHyperparams f;
  f.hidden_dim = 16;
  f.embed_dim = 16;
  f.image_size = 8;
  f.patch_size = 4;
  f.channels = 1;
  return f;
}

}  // namespace

TEST_CASE("synthetic fitness is 1 exactly at the target") {
  const SearchSpace space = testsupport::reduced_space();
  RngStream rng(1);
  SyntheticLandscape land{random_chromosome(space, rng), 1.0, 0.25};
  CHECK(synthetic_fitness(land.target, land) == 1.0);
}

TEST_CASE("hand-evaluated synthetic distance") {
  // Target length 3, candidate the identical 2-gene prefix, weights (1,1):
  // one missing gene counts its 3 fields plus the length gap of 1.
  const Chromosome target = chrom(
      {{2, 8, 0.1, {}}, {4, 16, 0.1, {}}, {2, 16, 0.1, {}}});
  Chromosome candidate = target;
  candidate.layers.pop_back();
  const SyntheticLandscape land{target, 1.0, 1.0};
  CHECK(synthetic_fitness(candidate, land) ==
        doctest::Approx(std::exp(-4.0)).epsilon(1e-12));
}

TEST_CASE("target is the unique argmax over the 84-architecture space") {
  const SearchSpace space = testsupport::reduced_space();
  const auto all = testsupport::enumerate_space(space);
  RngStream rng(2);
  const SyntheticLandscape land{random_chromosome(space, rng), 0.5, 0.25};

  int argmax = -1;
  double best = -1.0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    const double f = synthetic_fitness(all[i], land);
    CHECK(f > 0.0);
    CHECK(f <= 1.0);
    if (f > best) {
      best = f;
      argmax = static_cast<int>(i);
    }
  }
  CHECK(all[argmax] == land.target);
  for (const auto& c : all)
    if (!(c == land.target)) CHECK(synthetic_fitness(c, land) < 1.0);
}

TEST_CASE("weights cannot both be zero") {
  const SearchSpace space = testsupport::reduced_space();
  RngStream rng(3);
  SyntheticLandscape land{random_chromosome(space, rng), 0.0, 0.0};
  CHECK_THROWS_AS(synthetic_fitness(land.target, land), ValidationError);
}

TEST_CASE("separable-by-construction data reaches cv fitness >= 0.95") {
  const TensorDataset data = pixel_rule_dataset(60, 5);
  CvTrainConfig cfg;
  cfg.folds = 5;
  cfg.epochs = 40;
  cfg.learning_rate = 0.05;
  cfg.momentum = 0.9;
  cfg.batch_size = 4;
  cfg.task_head = nn::HeadDescriptor::binary();
  const Chromosome arch = chrom({{2, 12, 0.0, {}}});
  const double f = cv_fitness(arch, tiny_fixed(), data, cfg, 11);
  CHECK(f >= 0.95);
  CHECK(f <= 1.0);
}

TEST_CASE("shuffled labels land near chance level") {
  // Balanced labels independent of pure-noise images; the trained model can
  // only memorize, so held-out predictions are coin flips.
  TensorDataset data;
  data.channels = 1;
  data.height = 8;
  data.width = 8;
  data.kind = TargetKind::Binary;
  data.label_width = 1;
  RngStream rng(2001);
  for (int i = 0; i < 100; ++i) {
    for (int p = 0; p < 64; ++p)
      data.images.push_back(static_cast<float>(rng.uniform01()));
    data.labels.push_back(static_cast<std::uint16_t>(i % 2));
    ++data.n;
  }

  CvTrainConfig cfg;
  cfg.folds = 5;
  cfg.epochs = 60;
  cfg.learning_rate = 0.02;
  cfg.momentum = 0.9;
  cfg.batch_size = 4;
  cfg.task_head = nn::HeadDescriptor::binary();
  const Chromosome arch = chrom({{2, 12, 0.0, {}}});
  const double f = cv_fitness(arch, tiny_fixed(), data, cfg, 71);
  CHECK(f >= 0.4);
  CHECK(f <= 0.6);
}

TEST_CASE("cv fitness is deterministic for equal (chromosome, seed)") {
  const TensorDataset data = pixel_rule_dataset(30, 8);
  CvTrainConfig cfg;
  cfg.folds = 3;
  cfg.epochs = 2;
  cfg.learning_rate = 0.05;
  cfg.momentum = 0.9;
  cfg.batch_size = 8;
  cfg.task_head = nn::HeadDescriptor::binary();
  const Chromosome arch = chrom({{2, 12, 0.1, {}}});
  const double a = cv_fitness(arch, tiny_fixed(), data, cfg, 99);
  const double b = cv_fitness(arch, tiny_fixed(), data, cfg, 99);
  CHECK(a == b);
}

TEST_CASE("multilabel cv fitness stays in range") {
  TensorDataset data;
  data.channels = 1;
  data.height = 8;
  data.width = 8;
  data.kind = TargetKind::MultiLabel;
  data.label_width = 3;
  RngStream rng(13);
  const int n = 30;
  data.label_bits.assign(n * 1, 0);
  for (int i = 0; i < n; ++i) {
    for (int p = 0; p < 64; ++p)
      data.images.push_back(static_cast<float>(rng.uniform01()));
    ++data.n;
    data.set_label_bit(i, i % 3, true);
    if (i % 5 == 0) data.set_label_bit(i, (i + 1) % 3, true);
  }

  CvTrainConfig cfg;
  cfg.folds = 3;
  cfg.epochs = 2;
  cfg.learning_rate = 0.02;
  cfg.momentum = 0.9;
  cfg.batch_size = 8;
  cfg.task_head = nn::HeadDescriptor::multi_label(3);
  const double f = cv_fitness(chrom({{2, 12, 0.0, {}}}), tiny_fixed(), data,
                              cfg, 21);
  CHECK(f >= 0.0);
  CHECK(f <= 1.0);
}

TEST_CASE("multilabel stratification keys on the rarest positive label") {
  TensorDataset data;
  data.n = 4;
  data.channels = 1;
  data.height = 1;
  data.width = 1;
  data.kind = TargetKind::MultiLabel;
  data.label_width = 3;
  data.images.assign(4, 0.0f);
  data.label_bits.assign(4 * data.bits_row_bytes(), 0);
  // Label 0 appears 3 times, label 1 twice, label 2 once.
  data.set_label_bit(0, 0, true);
  data.set_label_bit(1, 0, true);
  data.set_label_bit(1, 1, true);
  data.set_label_bit(2, 0, true);
  data.set_label_bit(2, 1, true);
  data.set_label_bit(2, 2, true);
  // Item 3 has no positive labels at all.

  const auto strata = stratification_labels(data);
  CHECK(strata == std::vector<std::uint16_t>{0, 1, 2, 3});
}

TEST_CASE("config validation rejects impossible folds") {
  const TensorDataset data = pixel_rule_dataset(4, 9);
  CvTrainConfig cfg;
  cfg.folds = 10;
  cfg.task_head = nn::HeadDescriptor::binary();
  CHECK_THROWS_AS(cv_fitness(chrom({{2, 12, 0.0, {}}}), tiny_fixed(), data,
                             cfg, 1),
                  ValidationError);
}

TEST_CASE("evaluator interface is deterministic and self-describing") {
  const SearchSpace space = testsupport::reduced_space();
  RngStream rng(31);
  const SyntheticLandscape land{random_chromosome(space, rng), 0.5, 0.25};
  const SyntheticEvaluator eval(land, 77);
  const Chromosome probe = random_chromosome(space, rng);
  CHECK(eval.evaluate(probe) == eval.evaluate(probe));
  CHECK(eval.seed() == 77);
  CHECK(eval.describe().find("synthetic") == 0);
}

TEST_SUITE_END();
