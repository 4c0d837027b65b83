#include "evostack/fitness.hpp"

#include <algorithm>
#include <cmath>

#include "evostack/metrics.hpp"

namespace evostack {

namespace {

int gene_field_count(const LayerGene& g) {
  return 3 + static_cast<int>(g.extra.size());
}

int gene_mismatches(const LayerGene& a, const LayerGene& b) {
  int d = 0;
  if (a.heads != b.heads) ++d;
  if (a.mlp_dim != b.mlp_dim) ++d;
  if (a.dropout != b.dropout) ++d;
  // Extras compare key-wise; a key present on one side only counts once.
  auto ia = a.extra.begin();
  auto ib = b.extra.begin();
  while (ia != a.extra.end() || ib != b.extra.end()) {
    if (ib == b.extra.end() || (ia != a.extra.end() && ia->first < ib->first)) {
      ++d;
      ++ia;
    } else if (ia == a.extra.end() || ib->first < ia->first) {
      ++d;
      ++ib;
    } else {
      if (ia->second != ib->second) ++d;
      ++ia;
      ++ib;
    }
  }
  return d;
}

}  // namespace

double synthetic_fitness(const Chromosome& c, const SyntheticLandscape& land) {
  if (land.length_weight < 0.0 || land.gene_weight < 0.0)
    throw ValidationError("landscape weights must be non-negative");
  if (land.length_weight == 0.0 && land.gene_weight == 0.0)
    throw ValidationError("landscape weights cannot both be zero");
  if (land.target.length() < 1)
    throw ValidationError("landscape target is empty");

  const int len_c = c.length();
  const int len_t = land.target.length();
  const int aligned = std::min(len_c, len_t);

  int d_gene = 0;
  for (int i = 0; i < aligned; ++i)
    d_gene += gene_mismatches(c.layers[i], land.target.layers[i]);
  const Chromosome& longer = len_c > len_t ? c : land.target;
  for (int i = aligned; i < longer.length(); ++i)
    d_gene += gene_field_count(longer.layers[i]);

  const double distance = land.length_weight * std::abs(len_c - len_t) +
                          land.gene_weight * d_gene;
  return std::exp(-distance);
}

void CvTrainConfig::validate(int dataset_size) const {
  if (folds < 2) throw ValidationError("folds must be >= 2");
  if (folds > dataset_size)
    throw ValidationError("folds exceed dataset size");
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (learning_rate <= 0.0)
    throw ValidationError("learning_rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0)
    throw ValidationError("momentum must be in [0, 1)");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  task_head.validate();
}

std::vector<std::uint16_t> stratification_labels(const TensorDataset& data) {
  if (data.kind != TargetKind::MultiLabel) return data.labels;

  std::vector<std::uint64_t> label_counts(data.label_width, 0);
  for (int i = 0; i < data.n; ++i)
    for (int j = 0; j < data.label_width; ++j)
      if (data.label_bit(i, j)) ++label_counts[j];

  std::vector<std::uint16_t> out(data.n);
  for (int i = 0; i < data.n; ++i) {
    int rarest = -1;
    for (int j = 0; j < data.label_width; ++j) {
      if (!data.label_bit(i, j)) continue;
      if (rarest < 0 || label_counts[j] < label_counts[rarest]) rarest = j;
    }
    out[i] = rarest >= 0 ? static_cast<std::uint16_t>(rarest)
                         : static_cast<std::uint16_t>(data.label_width);
  }
  return out;
}

double cv_fitness(const Chromosome& c, const FixedHyperparams& fixed,
                  const TensorDataset& data, const CvTrainConfig& cfg,
                  std::uint64_t seed) {
  cfg.validate(data.n);
  nn::check_head_compatible(cfg.task_head, data);
  const std::string key = canonical_encode(c);
  const RngStream root = RngStream(seed).derive(key);

  const auto strata = stratification_labels(data);
  const FoldAssignment folds =
      stratified_kfold(strata, cfg.folds, root.derive("folds").seed());

  double sum = 0.0;
  for (int fold = 0; fold < cfg.folds; ++fold) {
    const auto train_idx = fold_train_indices(folds, fold);
    const auto test_idx = fold_test_indices(folds, fold);
    if (train_idx.empty() || test_idx.empty())
      throw ValidationError("fold " + std::to_string(fold) +
                            " has an empty split");
    if (static_cast<std::size_t>(cfg.batch_size) > train_idx.size())
      throw ValidationError("batch_size exceeds training-fold size");

    RngStream fold_rng = root.derive(static_cast<std::uint64_t>(fold));
    RngStream init_rng = fold_rng.derive("init");
    nn::TrainState<float> state(
        nn::build_model<float>(c, fixed, cfg.task_head, init_rng),
        fold_rng.derive("train"));

    nn::FitOptions opt;
    opt.epochs = cfg.epochs;
    opt.learning_rate = cfg.learning_rate;
    opt.momentum = cfg.momentum;
    opt.batch_size = cfg.batch_size;
    opt.strategy = nn::UnfreezeStrategy::Full;
    opt.loss = nn::LossConfig::for_head(cfg.task_head.kind);
    try {
      nn::fit_vit(state, data, train_idx, opt);
    } catch (const TrainingDivergence& e) {
      throw TrainingDivergence("fold " + std::to_string(fold) + ": " +
                               e.what());
    }
    sum += nn::holdout_f1(state.model, data, test_idx);
  }
  return sum / static_cast<double>(cfg.folds);
}

CvFitnessEvaluator::CvFitnessEvaluator(
    std::shared_ptr<const TensorDataset> data, FixedHyperparams fixed,
    CvTrainConfig cfg, std::uint64_t seed)
    : data_(std::move(data)), fixed_(fixed), cfg_(cfg), seed_(seed) {
  if (!data_) throw ValidationError("cv evaluator needs a dataset");
  cfg_.validate(data_->n);
  nn::check_head_compatible(cfg_.task_head, *data_);
}

std::string CvFitnessEvaluator::describe() const {
  return "cv(folds=" + std::to_string(cfg_.folds) +
         ",epochs=" + std::to_string(cfg_.epochs) + ")";
}

}  // namespace evostack
