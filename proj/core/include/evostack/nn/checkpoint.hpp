#pragma once

#include <filesystem>

#include "evostack/nn/backbone.hpp"
#include "evostack/nn/mlp.hpp"
#include "evostack/nn/vit.hpp"

namespace evostack::nn {

// Checkpoint container: magic "ETNN", u32 version, u32 metadata-JSON byte
// length, the JSON, then each parameter tensor as raw little-endian f32 in
// construction order. The JSON records what is needed to rebuild the module
// skeleton before the tensors are read back.

void save_vit_checkpoint(const std::filesystem::path& path,
                         const VitModel<float>& model);
VitModel<float> load_vit_checkpoint(const std::filesystem::path& path);

void save_mlp_checkpoint(const std::filesystem::path& path,
                         const MlpModel<float>& model);
MlpModel<float> load_mlp_checkpoint(const std::filesystem::path& path);

void save_backbone_checkpoint(const std::filesystem::path& path,
                              const Backbone& backbone);
Backbone load_backbone_checkpoint(const std::filesystem::path& path);

}  // namespace evostack::nn
