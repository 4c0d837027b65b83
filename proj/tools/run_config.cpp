#include "run_config.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

namespace evostack::cli {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& known,
                    const std::string& where) {
  for (const auto& [key, value] : j.items())
    if (!known.contains(key))
      throw ValidationError("unknown key \"" + key + "\" in " + where);
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

SearchSpace RunConfig::make_space() const {
  return SearchSpace(head_choices, mlp_dim_choices, dropout_low, dropout_high,
                     min_layers, max_layers, fixed, dropout_step);
}

SyntheticLandscape RunConfig::make_landscape(const SearchSpace& space) const {
  SyntheticLandscape land;
  land.length_weight = synthetic_length_weight;
  land.gene_weight = synthetic_gene_weight;
  if (synthetic_target_key.empty()) {
    RngStream rng = RngStream(seed).derive("landscape");
    land.target = random_chromosome(space, rng);
  } else {
    land.target = canonical_decode(synthetic_target_key);
    if (!space.contains(land.target))
      throw ValidationError("synthetic target " + synthetic_target_key +
                            " is outside the configured search space");
  }
  return land;
}

nn::BackboneConfig RunConfig::make_backbone_config(int channels) const {
  nn::BackboneConfig cfg;
  cfg.stage_widths = backbone_stage_widths;
  cfg.in_channels = channels;
  cfg.seed = backbone_seed;
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("config is not valid JSON: " +
                          std::string(e.what()));
  }

  RunConfig cfg;
  try {
    reject_unknown(j,
                   {"seed", "search_space", "evolution", "synthetic",
                    "cv_train", "hyper_grid", "backbone", "meta_train",
                    "synth"},
                   "config root");
    read(j, "seed", cfg.seed);

    if (j.contains("search_space")) {
      const auto& s = j.at("search_space");
      reject_unknown(s,
                     {"head_choices", "mlp_dim_choices", "dropout_range",
                      "dropout_step", "layer_count_range", "fixed"},
                     "search_space");
      read(s, "head_choices", cfg.head_choices);
      read(s, "mlp_dim_choices", cfg.mlp_dim_choices);
      if (s.contains("dropout_range")) {
        const auto r = s.at("dropout_range").get<std::vector<double>>();
        if (r.size() != 2)
          throw ValidationError("dropout_range must be [low, high]");
        cfg.dropout_low = r[0];
        cfg.dropout_high = r[1];
      }
      read(s, "dropout_step", cfg.dropout_step);
      if (s.contains("layer_count_range")) {
        const auto r = s.at("layer_count_range").get<std::vector<int>>();
        if (r.size() != 2)
          throw ValidationError("layer_count_range must be [min, max]");
        cfg.min_layers = r[0];
        cfg.max_layers = r[1];
      }
      if (s.contains("fixed")) {
        const auto& f = s.at("fixed");
        reject_unknown(f,
                       {"hidden_dim", "embed_dim", "image_size", "patch_size",
                        "channels"},
                       "search_space.fixed");
        read(f, "hidden_dim", cfg.fixed.hidden_dim);
        read(f, "embed_dim", cfg.fixed.embed_dim);
        read(f, "image_size", cfg.fixed.image_size);
        read(f, "patch_size", cfg.fixed.patch_size);
        read(f, "channels", cfg.fixed.channels);
      }
    }

    if (j.contains("evolution")) {
      const auto& e = j.at("evolution");
      reject_unknown(e,
                     {"max_gens", "pop_size", "p_cross", "p_mutate",
                      "mutation_type_probs", "tournament_size"},
                     "evolution");
      read(e, "max_gens", cfg.evolution.max_gens);
      read(e, "pop_size", cfg.evolution.pop_size);
      read(e, "p_cross", cfg.evolution.operators.p_cross);
      read(e, "p_mutate", cfg.evolution.operators.p_mutate);
      if (e.contains("mutation_type_probs")) {
        const auto v =
            e.at("mutation_type_probs").get<std::vector<double>>();
        if (v.size() != 3)
          throw ValidationError(
              "mutation_type_probs must be [add, remove, modify]");
        cfg.evolution.operators.mutation_type_probs = {v[0], v[1], v[2]};
      }
      read(e, "tournament_size", cfg.evolution.operators.tournament_size);
    }

    if (j.contains("synthetic")) {
      const auto& s = j.at("synthetic");
      reject_unknown(s, {"target_key", "length_weight", "gene_weight"},
                     "synthetic");
      read(s, "target_key", cfg.synthetic_target_key);
      read(s, "length_weight", cfg.synthetic_length_weight);
      read(s, "gene_weight", cfg.synthetic_gene_weight);
    }

    if (j.contains("cv_train")) {
      const auto& c = j.at("cv_train");
      reject_unknown(c,
                     {"folds", "epochs", "learning_rate", "momentum",
                      "batch_size"},
                     "cv_train");
      read(c, "folds", cfg.cv_train.folds);
      read(c, "epochs", cfg.cv_train.epochs);
      read(c, "learning_rate", cfg.cv_train.learning_rate);
      read(c, "momentum", cfg.cv_train.momentum);
      read(c, "batch_size", cfg.cv_train.batch_size);
    }

    if (j.contains("hyper_grid")) {
      const auto& h = j.at("hyper_grid");
      reject_unknown(h,
                     {"learning_rates", "momenta", "batch_sizes",
                      "fold_counts", "strategies", "epochs"},
                     "hyper_grid");
      read(h, "learning_rates", cfg.hyper_grid.learning_rates);
      read(h, "momenta", cfg.hyper_grid.momenta);
      read(h, "batch_sizes", cfg.hyper_grid.batch_sizes);
      read(h, "fold_counts", cfg.hyper_grid.fold_counts);
      if (h.contains("strategies")) {
        cfg.hyper_grid.strategies.clear();
        for (const auto& name :
             h.at("strategies").get<std::vector<std::string>>())
          cfg.hyper_grid.strategies.push_back(
              nn::unfreeze_strategy_from_name(name));
      }
      read(h, "epochs", cfg.stage1_epochs);
    }

    if (j.contains("backbone")) {
      const auto& b = j.at("backbone");
      reject_unknown(b, {"stage_widths", "seed"}, "backbone");
      read(b, "stage_widths", cfg.backbone_stage_widths);
      read(b, "seed", cfg.backbone_seed);
    }

    if (j.contains("meta_train")) {
      const auto& m = j.at("meta_train");
      reject_unknown(m,
                     {"hidden_widths", "learning_rate", "momentum",
                      "batch_size", "epochs", "focal_gamma", "focal_alpha"},
                     "meta_train");
      read(m, "hidden_widths", cfg.meta_train.hidden_widths);
      read(m, "learning_rate", cfg.meta_train.learning_rate);
      read(m, "momentum", cfg.meta_train.momentum);
      read(m, "batch_size", cfg.meta_train.batch_size);
      read(m, "epochs", cfg.meta_train.epochs);
      read(m, "focal_gamma", cfg.meta_train.focal_gamma);
      read(m, "focal_alpha", cfg.meta_train.focal_alpha);
    }

    if (j.contains("synth")) {
      const auto& s = j.at("synth");
      reject_unknown(s,
                     {"classes", "items_per_class", "image_size", "channels",
                      "noise_level"},
                     "synth");
      read(s, "classes", cfg.synth.classes);
      if (s.contains("items_per_class")) {
        if (s.at("items_per_class").is_number())
          cfg.synth.items_per_class = {s.at("items_per_class").get<int>()};
        else
          cfg.synth.items_per_class =
              s.at("items_per_class").get<std::vector<int>>();
      }
      read(s, "image_size", cfg.synth.image_size);
      read(s, "channels", cfg.synth.channels);
      read(s, "noise_level", cfg.synth.noise_level);
    }
  } catch (const json::exception& e) {
    throw ValidationError("config schema violation: " +
                          std::string(e.what()));
  }
  return cfg;
}

std::string run_config_to_json(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  j["seed"] = cfg.seed;
  j["search_space"] = {
      {"head_choices", cfg.head_choices},
      {"mlp_dim_choices", cfg.mlp_dim_choices},
      {"dropout_range", {cfg.dropout_low, cfg.dropout_high}},
      {"dropout_step", cfg.dropout_step},
      {"layer_count_range", {cfg.min_layers, cfg.max_layers}},
      {"fixed",
       {{"hidden_dim", cfg.fixed.hidden_dim},
        {"embed_dim", cfg.fixed.embed_dim},
        {"image_size", cfg.fixed.image_size},
        {"patch_size", cfg.fixed.patch_size},
        {"channels", cfg.fixed.channels}}}};
  j["evolution"] = {
      {"max_gens", cfg.evolution.max_gens},
      {"pop_size", cfg.evolution.pop_size},
      {"p_cross", cfg.evolution.operators.p_cross},
      {"p_mutate", cfg.evolution.operators.p_mutate},
      {"mutation_type_probs", cfg.evolution.operators.mutation_type_probs},
      {"tournament_size", cfg.evolution.operators.tournament_size}};
  j["synthetic"] = {{"target_key", cfg.synthetic_target_key},
                    {"length_weight", cfg.synthetic_length_weight},
                    {"gene_weight", cfg.synthetic_gene_weight}};
  j["cv_train"] = {{"folds", cfg.cv_train.folds},
                   {"epochs", cfg.cv_train.epochs},
                   {"learning_rate", cfg.cv_train.learning_rate},
                   {"momentum", cfg.cv_train.momentum},
                   {"batch_size", cfg.cv_train.batch_size}};
  std::vector<std::string> strategy_names;
  for (auto s : cfg.hyper_grid.strategies)
    strategy_names.push_back(nn::unfreeze_strategy_name(s));
  j["hyper_grid"] = {{"learning_rates", cfg.hyper_grid.learning_rates},
                     {"momenta", cfg.hyper_grid.momenta},
                     {"batch_sizes", cfg.hyper_grid.batch_sizes},
                     {"fold_counts", cfg.hyper_grid.fold_counts},
                     {"strategies", strategy_names},
                     {"epochs", cfg.stage1_epochs}};
  j["backbone"] = {{"stage_widths", cfg.backbone_stage_widths},
                   {"seed", cfg.backbone_seed}};
  j["meta_train"] = {{"hidden_widths", cfg.meta_train.hidden_widths},
                     {"learning_rate", cfg.meta_train.learning_rate},
                     {"momentum", cfg.meta_train.momentum},
                     {"batch_size", cfg.meta_train.batch_size},
                     {"epochs", cfg.meta_train.epochs},
                     {"focal_gamma", cfg.meta_train.focal_gamma},
                     {"focal_alpha", cfg.meta_train.focal_alpha}};
  j["synth"] = {{"classes", cfg.synth.classes},
                {"items_per_class", cfg.synth.items_per_class},
                {"image_size", cfg.synth.image_size},
                {"channels", cfg.synth.channels},
                {"noise_level", cfg.synth.noise_level}};
  return j.dump(2);
}

}  // namespace evostack::cli
