#include "evostack/stacknet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "evostack/fitness.hpp"
#include "evostack/metrics.hpp"

namespace evostack {

void HyperGrid::validate() const {
  if (learning_rates.empty() || momenta.empty() || batch_sizes.empty() ||
      fold_counts.empty() || strategies.empty())
    throw ValidationError("hyper grid has an empty dimension");
  for (double lr : learning_rates)
    if (lr <= 0.0) throw ValidationError("learning rates must be positive");
  for (double m : momenta)
    if (m < 0.0 || m >= 1.0)
      throw ValidationError("momenta must be in [0, 1)");
  for (int b : batch_sizes)
    if (b < 1) throw ValidationError("batch sizes must be >= 1");
  for (int f : fold_counts)
    if (f != 5 && f != 10)
      throw ValidationError("fold counts are limited to 5 or 10");
}

TensorDataset make_balanced_binary(const TensorDataset& data, int class_c,
                                   RngStream& rng) {
  if (data.kind != TargetKind::Single)
    throw ValidationError("balanced binary sets need single-label data");
  if (class_c < 0 || class_c >= data.label_width)
    throw ValidationError("class " + std::to_string(class_c) +
                          " outside label range");

  std::vector<int> positives;
  std::vector<std::vector<int>> negatives_by_class(data.label_width);
  for (int i = 0; i < data.n; ++i) {
    if (data.labels[i] == class_c)
      positives.push_back(i);
    else
      negatives_by_class[data.labels[i]].push_back(i);
  }
  if (positives.empty())
    throw ValidationError("class " + std::to_string(class_c) +
                          " absent from dataset");

  std::size_t total_negatives = 0;
  for (const auto& v : negatives_by_class) total_negatives += v.size();

  std::vector<int> chosen_negatives;
  if (total_negatives == 0) {
    std::cerr << "warning: dataset only contains class " << class_c
              << "; balanced set has no negatives\n";
  } else if (total_negatives <= positives.size()) {
    for (const auto& v : negatives_by_class)
      chosen_negatives.insert(chosen_negatives.end(), v.begin(), v.end());
  } else {
    // Largest-remainder allocation of the negative quota across classes.
    const double want = static_cast<double>(positives.size());
    std::vector<std::size_t> quota(data.label_width, 0);
    std::vector<std::pair<double, int>> remainders;
    std::size_t assigned = 0;
    for (int cls = 0; cls < data.label_width; ++cls) {
      if (cls == class_c || negatives_by_class[cls].empty()) continue;
      const double share = want * negatives_by_class[cls].size() /
                           static_cast<double>(total_negatives);
      quota[cls] = static_cast<std::size_t>(share);
      assigned += quota[cls];
      remainders.push_back({-(share - std::floor(share)), cls});
    }
    std::sort(remainders.begin(), remainders.end());
    for (const auto& [neg_frac, cls] : remainders) {
      if (assigned >= positives.size()) break;
      if (quota[cls] < negatives_by_class[cls].size()) {
        ++quota[cls];
        ++assigned;
      }
    }
    for (int cls = 0; cls < data.label_width; ++cls) {
      auto& pool = negatives_by_class[cls];
      if (quota[cls] == 0 || pool.empty()) continue;
      for (std::size_t i = pool.size(); i > 1; --i)
        std::swap(pool[i - 1], pool[rng.uniform_index(i)]);
      std::sort(pool.begin(), pool.begin() + quota[cls]);
      chosen_negatives.insert(chosen_negatives.end(), pool.begin(),
                              pool.begin() + quota[cls]);
    }
  }

  TensorDataset out;
  out.channels = data.channels;
  out.height = data.height;
  out.width = data.width;
  out.kind = TargetKind::Binary;
  out.label_width = 1;
  auto append = [&](int item, std::uint16_t label) {
    const auto img = data.image(item);
    out.images.insert(out.images.end(), img.begin(), img.end());
    out.labels.push_back(label);
    ++out.n;
  };
  for (int i : positives) append(i, 1);
  for (int i : chosen_negatives) append(i, 0);
  return out;
}

namespace {

double cv_score_binary(const Chromosome& base, const FixedHyperparams& fixed,
                       const TensorDataset& balanced, const WinningConfig& c,
                       int epochs, const RngStream& combo_rng) {
  const FoldAssignment folds = stratified_kfold(
      balanced.labels, c.folds, combo_rng.derive("folds").seed());
  double sum = 0.0;
  for (int fold = 0; fold < c.folds; ++fold) {
    const auto train_idx = fold_train_indices(folds, fold);
    const auto test_idx = fold_test_indices(folds, fold);
    RngStream fold_rng = combo_rng.derive(static_cast<std::uint64_t>(fold));
    RngStream init_rng = fold_rng.derive("init");
    nn::TrainState<float> state(
        nn::build_model<float>(base, fixed, nn::HeadDescriptor::binary(),
                               init_rng),
        fold_rng.derive("train"));
    nn::FitOptions opt;
    opt.epochs = epochs;
    opt.learning_rate = c.learning_rate;
    opt.momentum = c.momentum;
    opt.batch_size = std::min<int>(c.batch_size,
                                   static_cast<int>(train_idx.size()));
    opt.strategy = c.strategy;
    opt.loss = nn::LossConfig::for_head(nn::HeadKind::Binary);
    nn::fit_vit(state, balanced, train_idx, opt);
    sum += nn::holdout_f1(state.model, balanced, test_idx);
  }
  return sum / static_cast<double>(c.folds);
}

}  // namespace

ClassBinaryModel finetune_binary(const Chromosome& base,
                                 const FixedHyperparams& fixed,
                                 const TensorDataset& data, int class_c,
                                 const HyperGrid& grid, int epochs,
                                 std::uint64_t seed, Stage1Stats* stats) {
  grid.validate();
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  RngStream class_rng =
      RngStream(seed).derive("class").derive(
          static_cast<std::uint64_t>(class_c));
  RngStream balance_rng = class_rng.derive("balance");
  const TensorDataset balanced = make_balanced_binary(data, class_c,
                                                      balance_rng);

  bool have_best = false;
  WinningConfig best;
  double best_f1 = 0.0;
  std::uint64_t combo_id = 0;
  for (int folds : grid.fold_counts) {
    for (auto strategy : grid.strategies) {
      for (double lr : grid.learning_rates) {
        for (double momentum : grid.momenta) {
          for (int batch : grid.batch_sizes) {
            WinningConfig c{lr, momentum, batch, folds, strategy};
            const RngStream combo_rng =
                class_rng.derive("combo").derive(combo_id++);
            try {
              const double f1 = cv_score_binary(base, fixed, balanced, c,
                                                epochs, combo_rng);
              if (stats) stats->cv_training_runs += folds;
              if (!have_best || f1 > best_f1) {
                have_best = true;
                best_f1 = f1;
                best = c;
              }
            } catch (const TrainingDivergence& e) {
              if (stats) ++stats->skipped_combinations;
              std::cerr << "warning: class " << class_c << " combination lr="
                        << lr << " momentum=" << momentum << " batch="
                        << batch << " skipped: " << e.what() << '\n';
            }
          }
        }
      }
    }
  }
  if (!have_best)
    throw TrainingDivergence("every grid combination diverged for class " +
                             std::to_string(class_c));

  // Refit the winner on the full balanced set.
  RngStream final_rng = class_rng.derive("final");
  RngStream init_rng = final_rng.derive("init");
  nn::TrainState<float> state(
      nn::build_model<float>(base, fixed, nn::HeadDescriptor::binary(),
                             init_rng),
      final_rng.derive("train"));
  nn::FitOptions opt;
  opt.epochs = epochs;
  opt.learning_rate = best.learning_rate;
  opt.momentum = best.momentum;
  opt.batch_size = std::min<int>(best.batch_size, balanced.n);
  opt.strategy = best.strategy;
  opt.loss = nn::LossConfig::for_head(nn::HeadKind::Binary);
  std::vector<int> all(balanced.n);
  std::iota(all.begin(), all.end(), 0);
  nn::fit_vit(state, balanced, all, opt);
  if (stats) ++stats->final_fits;

  return {std::move(state.model), best, best_f1};
}

BinaryModelSet train_binary_suite(const Chromosome& base,
                                  const FixedHyperparams& fixed,
                                  const TensorDataset& data,
                                  const HyperGrid& grid, int epochs,
                                  std::uint64_t seed, int jobs) {
  if (data.kind != TargetKind::Single)
    throw ValidationError("stage-1 training needs single-label data");
  const int classes = data.label_width;
  std::vector<std::optional<ClassBinaryModel>> slots(classes);
  parallel_for(static_cast<std::size_t>(classes),
               static_cast<unsigned>(jobs), [&](std::size_t c) {
                 slots[c] = finetune_binary(base, fixed, data,
                                            static_cast<int>(c), grid,
                                            epochs, seed);
               });
  BinaryModelSet set;
  set.class_count = classes;
  for (auto& s : slots) set.models.push_back(std::move(*s));
  return set;
}

std::vector<float> probability_vector(const BinaryModelSet& models,
                                      std::span<const float> image) {
  if (models.models.empty() ||
      models.class_count != static_cast<int>(models.models.size()))
    throw ValidationError("binary model set is incomplete");
  std::vector<float> probs(models.class_count);
  for (int c = 0; c < models.class_count; ++c) {
    const auto logits =
        models.models[c].model.forward(image, 1, nn::Mode::Infer);
    probs[c] = 1.0f / (1.0f + std::exp(-logits[0]));
  }
  return probs;
}

std::array<double, 4> probability_stats(std::span<const float> probs) {
  if (probs.size() < 3)
    throw ValidationError("probability_stats needs at least 3 entries");
  std::vector<double> sorted(probs.begin(), probs.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());

  double sum = 0.0;
  for (double v : sorted) sum += v;
  const double mean = sum / static_cast<double>(sorted.size());
  double var = 0.0;
  for (double v : sorted) var += (v - mean) * (v - mean);
  var /= static_cast<double>(sorted.size());
  const double top3_mean = (sorted[0] + sorted[1] + sorted[2]) / 3.0;
  return {mean, std::sqrt(var), top3_mean, sorted[0] - top3_mean};
}

EngineeredFeatures assemble_features(std::span<const float> prob_vector,
                                     std::span<const float> deep_features,
                                     const std::array<double, 4>& stats) {
  if (prob_vector.empty()) throw ValidationError("empty probability vector");
  EngineeredFeatures f;
  f.prob_vector.assign(prob_vector.begin(), prob_vector.end());
  f.deep_features.assign(deep_features.begin(), deep_features.end());
  f.stats = stats;
  f.combined.reserve(prob_vector.size() + deep_features.size() + 4);
  f.combined.insert(f.combined.end(), prob_vector.begin(), prob_vector.end());
  f.combined.insert(f.combined.end(), deep_features.begin(),
                    deep_features.end());
  for (double s : stats) f.combined.push_back(static_cast<float>(s));
  return f;
}

EngineeredFeatures compute_features(const BinaryModelSet& models,
                                    const nn::Backbone& backbone,
                                    std::span<const float> image) {
  const auto& fixed = models.models.front().model.fixed();
  const auto probs = probability_vector(models, image);
  const auto deep = backbone.features(image, fixed.image_size,
                                      fixed.image_size);
  return assemble_features(probs, deep, probability_stats(probs));
}

void MetaTrainConfig::validate() const {
  if (hidden_widths.empty())
    throw ValidationError("meta classifier needs hidden widths");
  for (int w : hidden_widths)
    if (w < 1) throw ValidationError("meta widths must be positive");
  if (learning_rate <= 0.0)
    throw ValidationError("meta learning_rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0)
    throw ValidationError("meta momentum must be in [0, 1)");
  if (batch_size < 1) throw ValidationError("meta batch_size must be >= 1");
  if (epochs < 1) throw ValidationError("meta epochs must be >= 1");
  if (focal_gamma < 0.0)
    throw ValidationError("focal gamma must be non-negative");
  if (focal_alpha <= 0.0)
    throw ValidationError("focal alpha must be positive");
}

MetaClassifier train_meta(std::span<const EngineeredFeatures> features,
                          std::span<const std::uint16_t> labels,
                          const MetaTrainConfig& cfg) {
  cfg.validate();
  if (features.empty() || features.size() != labels.size())
    throw ValidationError("feature/label counts do not match or are empty");

  const std::uint16_t max_label =
      *std::max_element(labels.begin(), labels.end());
  const int classes = static_cast<int>(max_label) + 1;
  std::vector<bool> seen(classes, false);
  for (auto l : labels) seen[l] = true;
  int distinct = 0;
  for (bool s : seen) distinct += s ? 1 : 0;
  if (distinct < 2)
    throw ValidationError(
        "degenerate labels: meta training needs at least two classes");

  const int input_width = static_cast<int>(features[0].combined.size());
  for (const auto& f : features)
    if (static_cast<int>(f.combined.size()) != input_width)
      throw ValidationError("inconsistent engineered feature widths");

  std::vector<int> widths;
  widths.push_back(input_width);
  for (int w : cfg.hidden_widths) widths.push_back(w);
  widths.push_back(classes);

  RngStream root = RngStream(cfg.seed).derive("meta");
  RngStream init_rng = root.derive("init");
  MetaClassifier meta{nn::MlpModel<float>(widths, init_rng), classes, 0.0};

  const std::size_t n = features.size();
  std::vector<float> matrix(n * input_width);
  for (std::size_t i = 0; i < n; ++i)
    std::copy(features[i].combined.begin(), features[i].combined.end(),
              matrix.begin() + i * input_width);

  nn::LossConfig loss{nn::LossKind::Focal, cfg.focal_gamma, cfg.focal_alpha};
  auto grads = meta.net.zero_gradients();
  auto velocity = meta.net.zero_gradients();
  RngStream shuffle_rng = root.derive("shuffle");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<float> batch_x;
  std::vector<std::uint16_t> batch_y;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);
    for (std::size_t start = 0; start < n;
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop =
          std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
      const std::size_t bn = stop - start;
      batch_x.resize(bn * input_width);
      batch_y.resize(bn);
      for (std::size_t i = 0; i < bn; ++i) {
        std::copy(matrix.begin() + order[start + i] * input_width,
                  matrix.begin() + (order[start + i] + 1) * input_width,
                  batch_x.begin() + i * input_width);
        batch_y[i] = labels[order[start + i]];
      }
      nn::TargetBatch<float> targets{batch_y, {}};
      const float value = meta.net.loss_and_grad(
          std::span<const float>(batch_x), bn, targets, loss, grads);
      if (!std::isfinite(value))
        throw TrainingDivergence("meta training diverged at epoch " +
                                 std::to_string(epoch));
      nn::sgd_step(meta.net.params(), meta.net.group_trainable(), velocity,
                   grads, cfg.learning_rate, cfg.momentum);
    }
  }

  // Final training macro-F1 over all features.
  std::vector<ConfusionCounts> counts(classes);
  const auto logits = meta.net.forward(matrix, n);
  for (std::size_t i = 0; i < n; ++i) {
    const float* row = logits.data() + i * classes;
    int pred = 0;
    for (int j = 1; j < classes; ++j)
      if (row[j] > row[pred]) pred = j;
    for (int j = 0; j < classes; ++j)
      counts[j].add(pred == j, labels[i] == j);
  }
  meta.train_macro_f1 = macro_f1(counts);
  return meta;
}

Prediction predict_from_features(const MetaClassifier& meta,
                                 const EngineeredFeatures& features) {
  if (static_cast<int>(features.combined.size()) != meta.net.input_width())
    throw ValidationError("feature width " +
                          std::to_string(features.combined.size()) +
                          " != meta input width " +
                          std::to_string(meta.net.input_width()));
  const auto logits = meta.net.forward(features.combined, 1);

  Prediction p;
  p.confidences.resize(meta.class_count);
  float mx = logits[0];
  for (int j = 1; j < meta.class_count; ++j) mx = std::max(mx, logits[j]);
  double sum = 0.0;
  for (int j = 0; j < meta.class_count; ++j) {
    p.confidences[j] = std::exp(logits[j] - mx);
    sum += p.confidences[j];
  }
  for (auto& c : p.confidences) c = static_cast<float>(c / sum);
  p.class_id = 0;
  for (int j = 1; j < meta.class_count; ++j)
    if (p.confidences[j] > p.confidences[p.class_id]) p.class_id = j;
  return p;
}

Prediction predict(const BinaryModelSet& models, const nn::Backbone& backbone,
                   const MetaClassifier& meta, std::span<const float> image) {
  return predict_from_features(meta, compute_features(models, backbone,
                                                      image));
}

namespace {

constexpr int kStatsContractVersion = 1;

}  // namespace

void save_stage1(const std::filesystem::path& dir, const Stage1Bundle& b,
                 bool overwrite) {
  if (std::filesystem::exists(dir) && !overwrite)
    throw IoError("bundle directory " + dir.string() +
                  " exists; pass --overwrite to replace it");
  std::filesystem::create_directories(dir / "binary");

  for (int c = 0; c < b.models.class_count; ++c)
    nn::save_vit_checkpoint(dir / "binary" / (std::to_string(c) + ".ckpt"),
                            b.models.models[c].model);
  nn::save_backbone_checkpoint(dir / "backbone.ckpt", b.backbone);

  nlohmann::ordered_json j;
  j["class_names"] = b.class_names;
  j["class_count"] = b.models.class_count;
  j["feature_width"] = b.backbone.feature_width();
  j["stats_version"] = kStatsContractVersion;
  j["per_class"] = nlohmann::ordered_json::array();
  for (const auto& m : b.models.models) {
    j["per_class"].push_back(
        {{"cv_f1", m.cv_score},
         {"strategy", nn::unfreeze_strategy_name(m.config.strategy)},
         {"folds", m.config.folds},
         {"learning_rate", m.config.learning_rate},
         {"momentum", m.config.momentum},
         {"batch_size", m.config.batch_size}});
  }
  std::ofstream out(dir / "bundle.json", std::ios::binary);
  if (!out) throw IoError("cannot write bundle.json in " + dir.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing bundle.json");
}

Stage1Bundle load_stage1(const std::filesystem::path& dir) {
  std::ifstream in(dir / "bundle.json", std::ios::binary);
  if (!in) throw IoError("cannot open " + (dir / "bundle.json").string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad bundle.json: " + std::string(e.what()));
  }
  if (j.value("stats_version", 0) != kStatsContractVersion)
    throw IoError("unsupported bundle stats_version");

  const int classes = j.at("class_count").get<int>();
  Stage1Bundle b{{},
                 nn::load_backbone_checkpoint(dir / "backbone.ckpt"),
                 j.at("class_names").get<std::vector<std::string>>()};
  b.models.class_count = classes;
  const auto& per_class = j.at("per_class");
  for (int c = 0; c < classes; ++c) {
    auto model = nn::load_vit_checkpoint(dir / "binary" /
                                         (std::to_string(c) + ".ckpt"));
    WinningConfig cfg;
    cfg.strategy = nn::unfreeze_strategy_from_name(
        per_class.at(c).at("strategy").get<std::string>());
    cfg.folds = per_class.at(c).at("folds").get<int>();
    cfg.learning_rate = per_class.at(c).at("learning_rate").get<double>();
    cfg.momentum = per_class.at(c).at("momentum").get<double>();
    cfg.batch_size = per_class.at(c).at("batch_size").get<int>();
    b.models.models.push_back(
        {std::move(model), cfg, per_class.at(c).at("cv_f1").get<double>()});
  }
  return b;
}

void attach_meta(const std::filesystem::path& dir, const MetaClassifier& m) {
  if (!std::filesystem::exists(dir / "bundle.json"))
    throw IoError(dir.string() + " is not a stage-1 bundle directory");
  nn::save_mlp_checkpoint(dir / "meta.ckpt", m.net);
}

void save_bundle(const std::filesystem::path& dir, const StackNetBundle& b,
                 bool overwrite) {
  save_stage1(dir, {b.models, b.backbone, b.class_names}, overwrite);
  attach_meta(dir, b.meta);
}

StackNetBundle load_bundle(const std::filesystem::path& dir) {
  Stage1Bundle s1 = load_stage1(dir);
  const int classes = s1.models.class_count;
  StackNetBundle b{std::move(s1.models), std::move(s1.backbone),
                   {nn::load_mlp_checkpoint(dir / "meta.ckpt"), classes, 0.0},
                   std::move(s1.class_names)};

  const int expected = classes + b.backbone.feature_width() + 4;
  if (b.meta.net.input_width() != expected)
    throw ValidationError("meta input width " +
                          std::to_string(b.meta.net.input_width()) +
                          " != C+D+4 = " + std::to_string(expected));
  return b;
}

}  // namespace evostack
