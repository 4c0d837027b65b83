#pragma once

#include <memory>
#include <string>

#include "evostack/dataset.hpp"
#include "evostack/nn/train.hpp"
#include "evostack/search_space.hpp"

namespace evostack {

// Fitness contract consumed by the evolutionary loop. evaluate must be pure
// given (chromosome, seed) so cached and parallel evaluation cannot change
// results; implementations derive any internal randomness from those two
// inputs only.
class FitnessEvaluator {
 public:
  virtual ~FitnessEvaluator() = default;
  virtual double evaluate(const Chromosome& c) const = 0;
  virtual std::uint64_t seed() const = 0;
  virtual std::string describe() const = 0;
};

// Deterministic test landscape peaked at a target chromosome:
//   exp(-(length_weight*|len(c)-len(t)| + gene_weight*d_gene))
// where d_gene counts field mismatches over the aligned prefix plus a
// whole-gene penalty (all fields) per unmatched tail gene.
struct SyntheticLandscape {
  Chromosome target;
  double length_weight = 2.0;
  double gene_weight = 1.0;
};

double synthetic_fitness(const Chromosome& c, const SyntheticLandscape& land);

class SyntheticEvaluator : public FitnessEvaluator {
 public:
  SyntheticEvaluator(SyntheticLandscape land, std::uint64_t seed)
      : land_(std::move(land)), seed_(seed) {}

  double evaluate(const Chromosome& c) const override {
    return synthetic_fitness(c, land_);
  }
  std::uint64_t seed() const override { return seed_; }
  std::string describe() const override {
    return "synthetic(target=" + canonical_encode(land_.target) + ")";
  }
  const SyntheticLandscape& landscape() const { return land_; }

 private:
  SyntheticLandscape land_;
  std::uint64_t seed_;
};

struct CvTrainConfig {
  int folds = 5;
  int epochs = 5;
  double learning_rate = 0.01;
  double momentum = 0.9;
  int batch_size = 16;
  nn::HeadDescriptor task_head;

  void validate(int dataset_size) const;
};

// Stratified k-fold cross-validation fitness: build the model from the
// chromosome, train on each fold's training split, score F1 on the held-out
// split, return the mean. Per-fold initialization streams derive from
// (seed, canonical key, fold) so results are schedule-independent.
double cv_fitness(const Chromosome& c, const FixedHyperparams& fixed,
                  const TensorDataset& data, const CvTrainConfig& cfg,
                  std::uint64_t seed);

class CvFitnessEvaluator : public FitnessEvaluator {
 public:
  CvFitnessEvaluator(std::shared_ptr<const TensorDataset> data,
                     FixedHyperparams fixed, CvTrainConfig cfg,
                     std::uint64_t seed);

  double evaluate(const Chromosome& c) const override {
    return cv_fitness(c, fixed_, *data_, cfg_, seed_);
  }
  std::uint64_t seed() const override { return seed_; }
  std::string describe() const override;

 private:
  std::shared_ptr<const TensorDataset> data_;
  FixedHyperparams fixed_;
  CvTrainConfig cfg_;
  std::uint64_t seed_;
};

// Pseudo-class per item for stratification: the item's rarest positive
// label (ties to the lower index); items with no positive labels share the
// extra class label_width.
std::vector<std::uint16_t> stratification_labels(const TensorDataset& data);

}  // namespace evostack
