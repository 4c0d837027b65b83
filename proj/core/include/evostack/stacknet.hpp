#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <vector>

#include "evostack/dataset.hpp"
#include "evostack/nn/backbone.hpp"
#include "evostack/nn/checkpoint.hpp"
#include "evostack/nn/mlp.hpp"
#include "evostack/nn/train.hpp"
#include "evostack/search_space.hpp"

namespace evostack {

// Stage-1 hyperparameter grid. Cross-validation uses 5 and/or 10 folds;
// strategies are full unfreezing (FU) and gradual unfreezing (GU).
struct HyperGrid {
  std::vector<double> learning_rates{0.01, 0.001};
  std::vector<double> momenta{0.9};
  std::vector<int> batch_sizes{16, 32};
  std::vector<int> fold_counts{5};
  std::vector<nn::UnfreezeStrategy> strategies{
      nn::UnfreezeStrategy::Full, nn::UnfreezeStrategy::Gradual};

  void validate() const;
  std::size_t combinations() const {
    return learning_rates.size() * momenta.size() * batch_sizes.size() *
           fold_counts.size() * strategies.size();
  }
};

struct WinningConfig {
  double learning_rate = 0.0;
  double momentum = 0.0;
  int batch_size = 0;
  int folds = 0;
  nn::UnfreezeStrategy strategy = nn::UnfreezeStrategy::Full;
};

struct ClassBinaryModel {
  nn::VitModel<float> model;
  WinningConfig config;
  double cv_score = 0.0;
};

// One trained one-vs-all binary classifier per class, indexed by class id.
struct BinaryModelSet {
  int class_count = 0;
  std::vector<ClassBinaryModel> models;
};

// Eq-style engineered feature bundle: class probabilities, backbone
// features, probability statistics, and their ordered concatenation.
struct EngineeredFeatures {
  std::vector<float> prob_vector;   // length C
  std::vector<float> deep_features; // length D
  std::array<double, 4> stats{};    // mean, std, mean(top3), max-mean(top3)
  std::vector<float> combined;      // length C + D + 4
};

// All positives of class_c plus an equal count of negatives sampled without
// replacement, allocated proportionally across the other classes
// (largest-remainder rounding). Labels become {1 = class_c, 0 = rest}.
// Warns on stderr and keeps going when no negatives exist.
TensorDataset make_balanced_binary(const TensorDataset& data, int class_c,
                                   RngStream& rng);

struct Stage1Stats {
  int cv_training_runs = 0;
  int final_fits = 0;
  int skipped_combinations = 0;
};

// Grid-search fine-tuning of the base architecture as a one-vs-all binary
// classifier: every fold-count x strategy x hyperparameter combination is
// scored by stratified-CV mean F1; the winner is refit on the full balanced
// set. Diverging combinations are skipped with a stderr note.
ClassBinaryModel finetune_binary(const Chromosome& base,
                                 const FixedHyperparams& fixed,
                                 const TensorDataset& data, int class_c,
                                 const HyperGrid& grid, int epochs,
                                 std::uint64_t seed,
                                 Stage1Stats* stats = nullptr);

// Runs finetune_binary for every class, optionally on parallel workers.
BinaryModelSet train_binary_suite(const Chromosome& base,
                                  const FixedHyperparams& fixed,
                                  const TensorDataset& data,
                                  const HyperGrid& grid, int epochs,
                                  std::uint64_t seed, int jobs = 1);

// Sigmoid output of every class model in infer mode.
std::vector<float> probability_vector(const BinaryModelSet& models,
                                      std::span<const float> image);

// [mean, population std, mean of top-3, max - mean of top-3]. Sums run in
// value-sorted order, so the result is exactly permutation-invariant.
std::array<double, 4> probability_stats(std::span<const float> probs);

EngineeredFeatures assemble_features(std::span<const float> prob_vector,
                                     std::span<const float> deep_features,
                                     const std::array<double, 4>& stats);

EngineeredFeatures compute_features(const BinaryModelSet& models,
                                    const nn::Backbone& backbone,
                                    std::span<const float> image);

struct MetaTrainConfig {
  std::vector<int> hidden_widths{1024, 512, 256};
  double learning_rate = 0.0005;
  double momentum = 0.9;
  int batch_size = 16;
  int epochs = 40;
  double focal_gamma = 2.0;
  double focal_alpha = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct MetaClassifier {
  nn::MlpModel<float> net;
  int class_count = 0;
  double train_macro_f1 = 0.0;
};

// Focal-loss training of the fully connected meta net over engineered
// features. Rejects degenerate (single-class) label sets.
MetaClassifier train_meta(std::span<const EngineeredFeatures> features,
                          std::span<const std::uint16_t> labels,
                          const MetaTrainConfig& cfg);

struct Prediction {
  int class_id = 0;
  std::vector<float> confidences;  // softmax over meta logits, length C
};

Prediction predict(const BinaryModelSet& models, const nn::Backbone& backbone,
                   const MetaClassifier& meta, std::span<const float> image);
Prediction predict_from_features(const MetaClassifier& meta,
                                 const EngineeredFeatures& features);

// Bundle directory: binary/<class_id>.ckpt, backbone.ckpt, meta.ckpt,
// bundle.json (class names, C, D, stats contract version). Stage 1 writes
// everything except meta.ckpt; stage 2 attaches it.
struct StackNetBundle {
  BinaryModelSet models;
  nn::Backbone backbone;
  MetaClassifier meta;
  std::vector<std::string> class_names;
};

struct Stage1Bundle {
  BinaryModelSet models;
  nn::Backbone backbone;
  std::vector<std::string> class_names;
};

void save_stage1(const std::filesystem::path& dir, const Stage1Bundle& b,
                 bool overwrite);
Stage1Bundle load_stage1(const std::filesystem::path& dir);
void attach_meta(const std::filesystem::path& dir, const MetaClassifier& m);

void save_bundle(const std::filesystem::path& dir, const StackNetBundle& b,
                 bool overwrite);
StackNetBundle load_bundle(const std::filesystem::path& dir);

}  // namespace evostack
