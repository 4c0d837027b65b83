// Command-line front end: dataset generation, architecture search, the
// two-stage classifier pipeline, prediction, and metric reports.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "evostack/evolution.hpp"
#include "evostack/metrics.hpp"
#include "evostack/stacknet.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using namespace evostack;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitValidation = 3;
constexpr int kExitRuntime = 4;

struct GlobalArgs {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int jobs = 1;
  bool overwrite = false;
};

cli::RunConfig resolve_config(const GlobalArgs& g) {
  cli::RunConfig cfg;
  if (!g.config_path.empty()) cfg = cli::load_run_config(g.config_path);
  if (g.seed_set) cfg.seed = g.seed;
  cfg.evolution.seed = cfg.seed;
  cfg.evolution.parallel_evaluations = g.jobs;
  cfg.synth.seed = cfg.seed;
  cfg.meta_train.seed = cfg.seed;
  return cfg;
}

void check_data_matches_fixed(const TensorDataset& data,
                              const FixedHyperparams& fixed) {
  if (data.height != fixed.image_size || data.width != fixed.image_size)
    throw ValidationError("dataset is " + std::to_string(data.height) + "x" +
                          std::to_string(data.width) +
                          " but the configured image_size is " +
                          std::to_string(fixed.image_size));
  if (data.channels != fixed.channels)
    throw ValidationError("dataset has " + std::to_string(data.channels) +
                          " channels but the configuration expects " +
                          std::to_string(fixed.channels));
}

nn::HeadDescriptor head_for(const TensorDataset& data) {
  switch (data.kind) {
    case TargetKind::Binary: return nn::HeadDescriptor::binary();
    case TargetKind::MultiLabel:
      return nn::HeadDescriptor::multi_label(data.label_width);
    case TargetKind::Single:
      return nn::HeadDescriptor::multi_class(data.label_width);
  }
  return nn::HeadDescriptor::multi_class(data.label_width);
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

int cmd_gen_data(const GlobalArgs& g, const std::string& out,
                 std::optional<int> classes, std::optional<int> items) {
  cli::RunConfig cfg = resolve_config(g);
  if (classes) cfg.synth.classes = *classes;
  if (items) cfg.synth.items_per_class = {*items};
  const fs::path dir = out;
  if (fs::exists(dir) && !g.overwrite)
    throw IoError("output directory " + dir.string() +
                  " exists; pass --overwrite to replace it");

  const TensorDataset data = synth_generate(cfg.synth);
  save_dataset(data, dir);
  std::cout << "wrote " << dir.string() << ": n=" << data.n
            << " classes=" << data.label_width
            << " image=" << data.height << "x" << data.width << "x"
            << data.channels << " noise=" << cfg.synth.noise_level << "\n";
  return 0;
}

int cmd_evolve(const GlobalArgs& g, const std::string& out,
               const std::string& fitness_kind, const std::string& data_dir,
               const std::string& cache_in, std::optional<int> generations,
               std::optional<int> pop_size) {
  cli::RunConfig cfg = resolve_config(g);
  if (generations) cfg.evolution.max_gens = *generations;
  if (pop_size) cfg.evolution.pop_size = *pop_size;
  const SearchSpace space = cfg.make_space();

  std::unique_ptr<FitnessEvaluator> evaluator;
  std::shared_ptr<TensorDataset> data;
  if (fitness_kind == "synthetic") {
    evaluator = std::make_unique<SyntheticEvaluator>(
        cfg.make_landscape(space), cfg.seed);
  } else if (fitness_kind == "cv") {
    if (data_dir.empty())
      throw ValidationError("--fitness cv requires --data <dataset-dir>");
    data = std::make_shared<TensorDataset>(load_dataset(data_dir));
    check_data_matches_fixed(*data, space.fixed());
    CvTrainConfig cv = cfg.cv_train;
    cv.task_head = head_for(*data);
    evaluator = std::make_unique<CvFitnessEvaluator>(data, space.fixed(), cv,
                                                     cfg.seed);
  } else {
    throw ValidationError("--fitness must be 'synthetic' or 'cv'");
  }

  std::map<std::string, double> preload;
  if (!cache_in.empty()) preload = load_cache_file(cache_in);

  const EvolveResult result =
      evolve(cfg.evolution, space, *evaluator,
             cache_in.empty() ? nullptr : &preload);
  write_run_dir(out, result, cfg.evolution, space, *evaluator, g.overwrite);

  std::cout << "best " << canonical_encode(result.best.chromosome)
            << " fitness " << fixed4(result.best.fitness.value()) << "\n"
            << "run directory " << out << " (" << result.history.size()
            << " records, " << result.cache_misses << " evaluations, "
            << result.cache_hits << " cache hits)\n";
  return 0;
}

int cmd_train_binary(const GlobalArgs& g, const std::string& data_dir,
                     const std::string& arch_path, const std::string& out) {
  cli::RunConfig cfg = resolve_config(g);
  const TensorDataset data = load_dataset(data_dir);
  if (data.kind != TargetKind::Single)
    throw ValidationError("stage-1 training needs a single-label dataset");
  auto [arch, fixed] = load_architecture(arch_path);
  check_data_matches_fixed(data, fixed);

  const BinaryModelSet models = train_binary_suite(
      arch, fixed, data, cfg.hyper_grid, cfg.stage1_epochs, cfg.seed,
      g.jobs);
  const nn::Backbone backbone(cfg.make_backbone_config(data.channels));

  std::vector<std::string> names = data.class_names;
  if (names.empty())
    for (int c = 0; c < data.label_width; ++c)
      names.push_back("class_" + std::to_string(c));

  save_stage1(out, {models, backbone, names}, g.overwrite);
  for (int c = 0; c < models.class_count; ++c) {
    const auto& m = models.models[c];
    std::cout << names[c] << ": cv_f1 " << fixed4(m.cv_score) << " ("
              << nn::unfreeze_strategy_name(m.config.strategy) << "-"
              << m.config.folds << "fold, lr " << m.config.learning_rate
              << ", batch " << m.config.batch_size << ")\n";
  }
  std::cout << "wrote stage-1 bundle to " << out << "\n";
  return 0;
}

std::vector<EngineeredFeatures> features_for_dataset(
    const Stage1Bundle& s1, const TensorDataset& data, int jobs) {
  std::vector<EngineeredFeatures> features(data.n);
  parallel_for(static_cast<std::size_t>(data.n),
               static_cast<unsigned>(jobs), [&](std::size_t i) {
                 features[i] = compute_features(
                     s1.models, s1.backbone,
                     data.image(static_cast<int>(i)));
               });
  return features;
}

int cmd_train_meta(const GlobalArgs& g, const std::string& data_dir,
                   const std::string& bundle_dir) {
  cli::RunConfig cfg = resolve_config(g);
  const TensorDataset data = load_dataset(data_dir);
  if (data.kind != TargetKind::Single)
    throw ValidationError("meta training needs a single-label dataset");
  const Stage1Bundle s1 = load_stage1(bundle_dir);
  if (data.label_width != s1.models.class_count)
    throw ValidationError("dataset has " + std::to_string(data.label_width) +
                          " classes but the bundle was trained for " +
                          std::to_string(s1.models.class_count));

  const auto features = features_for_dataset(s1, data, g.jobs);
  const MetaClassifier meta = train_meta(features, data.labels,
                                         cfg.meta_train);
  attach_meta(bundle_dir, meta);
  std::cout << "meta classifier trained: macro_f1 "
            << fixed4(meta.train_macro_f1) << " over " << data.n
            << " items; wrote " << (fs::path(bundle_dir) / "meta.ckpt")
            << "\n";
  return 0;
}

int cmd_predict(const GlobalArgs& g, const std::string& bundle_dir,
                const std::string& input_dir, int index) {
  (void)g;
  const StackNetBundle bundle = load_bundle(bundle_dir);
  const TensorDataset data = load_dataset(input_dir);
  if (index < 0 || index >= data.n)
    throw ValidationError("--index " + std::to_string(index) +
                          " outside dataset of " + std::to_string(data.n));
  const auto& fixed = bundle.models.models.front().model.fixed();
  check_data_matches_fixed(data, fixed);

  const Prediction pred =
      predict(bundle.models, bundle.backbone, bundle.meta, data.image(index));
  nlohmann::ordered_json j;
  j["class"] = pred.class_id;
  j["label"] = pred.class_id < static_cast<int>(bundle.class_names.size())
                   ? bundle.class_names[pred.class_id]
                   : std::to_string(pred.class_id);
  j["confidences"] = pred.confidences;
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_report(const GlobalArgs& g, const std::string& bundle_dir,
               const std::string& data_dir, const std::string& out_path) {
  const StackNetBundle bundle = load_bundle(bundle_dir);
  const TensorDataset data = load_dataset(data_dir);
  if (data.kind != TargetKind::Single)
    throw ValidationError("reports need a single-label dataset");
  if (data.label_width != bundle.models.class_count)
    throw ValidationError("dataset classes do not match the bundle");
  const int classes = bundle.models.class_count;

  if (fs::exists(out_path) && !g.overwrite)
    throw IoError("report file " + out_path +
                  " exists; pass --overwrite to replace it");

  // Per-class one-vs-rest confusion of each binary model, plus the meta
  // pipeline and the argmax-over-P baseline.
  std::vector<ConfusionCounts> binary_counts(classes);
  std::vector<ConfusionCounts> meta_counts(classes);
  std::vector<ConfusionCounts> baseline_counts(classes);
  std::uint64_t meta_exact = 0, baseline_exact = 0;

  std::vector<Prediction> preds(data.n);
  std::vector<std::vector<float>> probs(data.n);
  parallel_for(static_cast<std::size_t>(data.n),
               static_cast<unsigned>(g.jobs), [&](std::size_t i) {
                 const auto image = data.image(static_cast<int>(i));
                 probs[i] = probability_vector(bundle.models, image);
                 const auto deep = bundle.backbone.features(
                     image, data.height, data.width);
                 preds[i] = predict_from_features(
                     bundle.meta,
                     assemble_features(probs[i], deep,
                                       probability_stats(probs[i])));
               });

  for (int i = 0; i < data.n; ++i) {
    const int truth = data.labels[i];
    for (int c = 0; c < classes; ++c)
      binary_counts[c].add(probs[i][c] > 0.5f, truth == c);
    const int meta_pred = preds[i].class_id;
    const int base_pred = static_cast<int>(
        std::max_element(probs[i].begin(), probs[i].end()) -
        probs[i].begin());
    meta_exact += meta_pred == truth;
    baseline_exact += base_pred == truth;
    for (int c = 0; c < classes; ++c) {
      meta_counts[c].add(meta_pred == c, truth == c);
      baseline_counts[c].add(base_pred == c, truth == c);
    }
  }

  std::string csv = "class,model,accuracy,precision,recall,f1,mcc\n";
  for (int c = 0; c < classes; ++c) {
    const auto m = binary_metrics(binary_counts[c]);
    const auto& cfg = bundle.models.models[c].config;
    csv += bundle.class_names[c];
    csv += ",";
    csv += std::string(nn::unfreeze_strategy_name(cfg.strategy)) + "-" +
           std::to_string(cfg.folds) + "fold";
    csv += "," + fixed4(m.accuracy) + "," + fixed4(m.precision) + "," +
           fixed4(m.recall) + "," + fixed4(m.f1) + "," + fixed4(m.mcc) +
           "\n";
  }
  auto overall_row = [&](const char* name,
                         const std::vector<ConfusionCounts>& counts,
                         std::uint64_t exact) {
    double precision = 0, recall = 0, f1 = 0, mcc = 0;
    for (const auto& c : counts) {
      const auto m = binary_metrics(c);
      precision += m.precision;
      recall += m.recall;
      f1 += m.f1;
      mcc += m.mcc;
    }
    const double k = static_cast<double>(classes);
    csv += std::string("overall,") + name + "," +
           fixed4(static_cast<double>(exact) / data.n) + "," +
           fixed4(precision / k) + "," + fixed4(recall / k) + "," +
           fixed4(f1 / k) + "," + fixed4(mcc / k) + "\n";
  };
  overall_row("stacknet-meta", meta_counts, meta_exact);
  overall_row("argmax-p", baseline_counts, baseline_exact);

  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw IoError("cannot write " + out_path);
  out << csv;
  if (!out) throw IoError("failed writing " + out_path);
  std::cout << csv;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Evolutionary transformer search and stacked one-vs-all "
               "ensemble pipeline"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalArgs g;
  app.add_option("--config", g.config_path,
                 "JSON experiment configuration; flags override it");
  auto* seed_opt = app.add_option("--seed", g.seed, "Master random seed");
  app.add_option("--jobs", g.jobs, "Worker threads for parallel sections")
      ->check(CLI::PositiveNumber);
  app.add_flag("--overwrite", g.overwrite,
               "Replace existing output files and directories");

  std::string out, data_dir, arch_path, bundle_dir, input_dir, cache_in;
  std::string fitness_kind = "synthetic";
  int index = 0;
  std::optional<int> generations, pop_size;
  std::optional<int> classes_flag, items_flag;

  auto* gen = app.add_subcommand("gen-data",
                                 "Generate a synthetic labeled dataset");
  gen->fallthrough();
  gen->add_option("--out", out, "Output dataset directory")->required();
  gen->add_option("--classes", classes_flag, "Class count");
  gen->add_option("--items-per-class", items_flag, "Items per class");

  auto* evo = app.add_subcommand("evolve",
                                 "Run the evolutionary architecture search");
  evo->fallthrough();
  evo->add_option("--out", out, "Run directory")->required();
  evo->add_option("--fitness", fitness_kind, "synthetic | cv");
  evo->add_option("--data", data_dir, "Dataset directory (cv fitness)");
  evo->add_option("--generations", generations, "Generation budget");
  evo->add_option("--pop-size", pop_size, "Population size");
  evo->add_option("--load-cache", cache_in,
                  "Warm-start fitness cache from a cache.json");

  auto* tb = app.add_subcommand("train-binary",
                                "Train the per-class one-vs-all models");
  tb->fallthrough();
  tb->add_option("--data", data_dir, "Training dataset directory")
      ->required();
  tb->add_option("--arch", arch_path, "Architecture JSON path")->required();
  tb->add_option("--out", bundle_dir, "Bundle output directory")->required();

  auto* tm = app.add_subcommand("train-meta",
                                "Train the meta classifier into a bundle");
  tm->fallthrough();
  tm->add_option("--data", data_dir, "Training dataset directory")
      ->required();
  tm->add_option("--bundle", bundle_dir, "Stage-1 bundle directory")
      ->required();

  auto* pr = app.add_subcommand("predict", "Predict one image from a bundle");
  pr->fallthrough();
  pr->add_option("--bundle", bundle_dir, "Bundle directory")->required();
  pr->add_option("--input", input_dir, "Dataset directory with the image")
      ->required();
  pr->add_option("--index", index, "Item index within the dataset");

  auto* rp = app.add_subcommand("report", "Emit the per-class metrics CSV");
  rp->fallthrough();
  rp->add_option("--bundle", bundle_dir, "Bundle directory")->required();
  rp->add_option("--data", data_dir, "Evaluation dataset directory")
      ->required();
  rp->add_option("--out", out, "CSV output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return kExitUsage;
  }
  g.seed_set = seed_opt->count() > 0;

  try {
    if (gen->parsed())
      return cmd_gen_data(g, out, classes_flag, items_flag);
    if (evo->parsed())
      return cmd_evolve(g, out, fitness_kind, data_dir, cache_in,
                        generations, pop_size);
    if (tb->parsed()) return cmd_train_binary(g, data_dir, arch_path,
                                              bundle_dir);
    if (tm->parsed()) return cmd_train_meta(g, data_dir, bundle_dir);
    if (pr->parsed()) return cmd_predict(g, bundle_dir, input_dir, index);
    if (rp->parsed()) return cmd_report(g, bundle_dir, data_dir, out);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
