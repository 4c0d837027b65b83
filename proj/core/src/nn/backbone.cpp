#include "evostack/nn/backbone.hpp"

#include <algorithm>
#include <cmath>

namespace evostack::nn {

Backbone::Backbone(BackboneConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.stage_widths.size() != 4)
    throw ValidationError("backbone expects exactly four stage widths");
  for (int w : cfg_.stage_widths)
    if (w < 1) throw ValidationError("stage widths must be positive");
  if (cfg_.in_channels < 1)
    throw ValidationError("backbone channels must be positive");

  RngStream rng = RngStream(cfg_.seed).derive("backbone");
  int in_c = cfg_.in_channels;
  for (int s = 0; s < 4; ++s) {
    const int out_c = cfg_.stage_widths[s];
    const double scale = std::sqrt(2.0 / (in_c * 9.0));
    std::vector<float> w(static_cast<std::size_t>(out_c) * in_c * 9);
    for (auto& v : w) v = static_cast<float>(rng.normal() * scale);
    weights_.push_back(std::move(w));
    biases_.emplace_back(out_c, 0.0f);
    feature_width_ += out_c;
    in_c = out_c;
  }
}

void Backbone::load_parameters(std::vector<std::vector<float>> weights,
                               std::vector<std::vector<float>> biases) {
  if (weights.size() != weights_.size() || biases.size() != biases_.size())
    throw ValidationError("backbone checkpoint has wrong stage count");
  for (std::size_t s = 0; s < weights.size(); ++s) {
    if (weights[s].size() != weights_[s].size() ||
        biases[s].size() != biases_[s].size())
      throw ValidationError("backbone checkpoint tensor shape mismatch");
  }
  weights_ = std::move(weights);
  biases_ = std::move(biases);
}

namespace {

// 3x3 convolution, stride 2, clamp-to-edge padding, ReLU. Edge clamping
// keeps spatially-uniform inputs exactly uniform, so global average pooling
// equals the single-position activation.
std::vector<float> conv_stage(const std::vector<float>& w,
                              const std::vector<float>& b,
                              std::span<const float> in, int in_c, int h,
                              int wdt, int out_c, int& oh, int& ow) {
  oh = (h - 1) / 2 + 1;
  ow = (wdt - 1) / 2 + 1;
  std::vector<float> out(static_cast<std::size_t>(out_c) * oh * ow, 0.0f);
  for (int oc = 0; oc < out_c; ++oc) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        float acc = b[oc];
        const int cy = oy * 2;
        const int cx = ox * 2;
        for (int ic = 0; ic < in_c; ++ic) {
          for (int ky = -1; ky <= 1; ++ky) {
            const int y = std::clamp(cy + ky, 0, h - 1);
            for (int kx = -1; kx <= 1; ++kx) {
              const int x = std::clamp(cx + kx, 0, wdt - 1);
              acc += w[((static_cast<std::size_t>(oc) * in_c + ic) * 3 +
                        (ky + 1)) *
                           3 +
                       (kx + 1)] *
                     in[(static_cast<std::size_t>(ic) * h + y) * wdt + x];
            }
          }
        }
        out[(static_cast<std::size_t>(oc) * oh + oy) * ow + ox] =
            acc > 0.0f ? acc : 0.0f;
      }
    }
  }
  return out;
}

}  // namespace

std::vector<float> Backbone::features(std::span<const float> image, int h,
                                      int w) const {
  if (image.size() != static_cast<std::size_t>(cfg_.in_channels) * h * w)
    throw ValidationError("backbone input does not match channels*h*w");

  std::vector<float> out;
  out.reserve(feature_width_);
  std::vector<float> cur(image.begin(), image.end());
  int in_c = cfg_.in_channels;
  int ch = h, cw = w;
  for (int s = 0; s < 4; ++s) {
    const int out_c = cfg_.stage_widths[s];
    int oh = 0, ow = 0;
    cur = conv_stage(weights_[s], biases_[s], cur, in_c, ch, cw, out_c, oh,
                     ow);
    // Global average pool this stage.
    const double denom = static_cast<double>(oh) * ow;
    for (int oc = 0; oc < out_c; ++oc) {
      double sum = 0.0;
      const float* plane = cur.data() + static_cast<std::size_t>(oc) * oh * ow;
      for (int i = 0; i < oh * ow; ++i) sum += plane[i];
      out.push_back(static_cast<float>(sum / denom));
    }
    in_c = out_c;
    ch = oh;
    cw = ow;
  }
  return out;
}

}  // namespace evostack::nn
