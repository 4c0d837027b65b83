#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "evostack/evolution.hpp"
#include "evostack/fitness.hpp"
#include "evostack/nn/backbone.hpp"
#include "evostack/search_space.hpp"
#include "evostack/stacknet.hpp"

namespace evostack::cli {

// The experiment configuration document. Every command reads the sections
// it needs; flags override file values. Unknown keys anywhere are rejected.
struct RunConfig {
  std::uint64_t seed = 0;

  // search_space
  std::vector<int> head_choices{2, 4};
  std::vector<int> mlp_dim_choices{64, 128};
  double dropout_low = 0.0;
  double dropout_high = 0.1;
  double dropout_step = 0.1;
  int min_layers = 1;
  int max_layers = 3;
  FixedHyperparams fixed{64, 64, 32, 8, 3};  // hidden, embed, image, patch, ch

  // evolution
  EvolutionConfig evolution{20, 6, OperatorConfig{}, 0, 1};

  // synthetic landscape; empty target_key derives one from (space, seed)
  std::string synthetic_target_key;
  double synthetic_length_weight = 2.0;
  double synthetic_gene_weight = 1.0;

  // cv_train
  CvTrainConfig cv_train{5, 5, 0.01, 0.9, 16, {}};

  // hyper_grid (+ stage-1 epoch budget)
  HyperGrid hyper_grid;
  int stage1_epochs = 4;

  // backbone
  std::vector<int> backbone_stage_widths{16, 32, 64, 16};
  std::uint64_t backbone_seed = 0x8ac5eedull;

  // meta_train
  MetaTrainConfig meta_train;

  // synth
  SynthSpec synth{6, {60}, 32, 3, 0.1, 0};

  SearchSpace make_space() const;
  SyntheticLandscape make_landscape(const SearchSpace& space) const;
  nn::BackboneConfig make_backbone_config(int channels) const;
};

// Parses and validates the JSON document at `path` over the defaults.
RunConfig load_run_config(const std::filesystem::path& path);

std::string run_config_to_json(const RunConfig& cfg);

}  // namespace evostack::cli
