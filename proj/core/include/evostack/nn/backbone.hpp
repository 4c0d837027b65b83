#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "evostack/util.hpp"

namespace evostack::nn {

struct BackboneConfig {
  std::vector<int> stage_widths{16, 32, 64, 16};
  int in_channels = 3;
  std::uint64_t seed = 0x8ac5eedull;
};

// Four 3x3/stride-2 convolutional stages with fixed seed-derived weights.
// Each stage's output is global-average-pooled; the pooled vectors
// concatenate in stage order to a feature of width sum(stage_widths).
// Weights are immutable after construction; features are deterministic.
class Backbone {
 public:
  explicit Backbone(BackboneConfig cfg);

  const BackboneConfig& config() const { return cfg_; }
  int feature_width() const { return feature_width_; }

  // One image, channels*h*w floats; returns feature_width() floats.
  std::vector<float> features(std::span<const float> image, int h,
                              int w) const;

  // Raw parameter access for checkpointing.
  const std::vector<std::vector<float>>& stage_weights() const {
    return weights_;
  }
  const std::vector<std::vector<float>>& stage_biases() const {
    return biases_;
  }
  void load_parameters(std::vector<std::vector<float>> weights,
                       std::vector<std::vector<float>> biases);

 private:
  BackboneConfig cfg_;
  int feature_width_ = 0;
  // weights_[s]: (out_c, in_c, 3, 3); biases_[s]: (out_c)
  std::vector<std::vector<float>> weights_;
  std::vector<std::vector<float>> biases_;
};

}  // namespace evostack::nn
