#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "evostack/nn/losses.hpp"
#include "evostack/nn/ops.hpp"
#include "evostack/nn/vit.hpp"
#include "evostack/util.hpp"

namespace evostack::nn {

// Plain fully connected stack with ReLU between layers, used by the
// meta-classifier. widths = {in, hidden..., out}.
template <class T>
class MlpModel {
 public:
  MlpModel(std::vector<int> widths, RngStream& init_rng) : widths_(widths) {
    if (widths_.size() < 2)
      throw ValidationError("mlp needs at least input and output widths");
    for (int w : widths_)
      if (w < 1) throw ValidationError("mlp widths must be positive");
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      const std::size_t in = static_cast<std::size_t>(widths_[l]);
      const std::size_t out = static_cast<std::size_t>(widths_[l + 1]);
      const double scale = 1.0 / std::sqrt(static_cast<double>(in));
      Param<T> w;
      w.name = "fc" + std::to_string(l) + ".weight";
      w.group = 0;
      w.shape = {in, out};
      w.value.resize(in * out);
      for (auto& v : w.value)
        v = static_cast<T>(init_rng.uniform_real(-scale, scale));
      params_.push_back(std::move(w));
      Param<T> b;
      b.name = "fc" + std::to_string(l) + ".bias";
      b.group = 0;
      b.shape = {out};
      b.value.resize(out);
      for (auto& v : b.value)
        v = static_cast<T>(init_rng.uniform_real(-scale, scale));
      params_.push_back(std::move(b));
    }
    trainable_.assign(1, true);
  }

  const std::vector<int>& widths() const { return widths_; }
  int input_width() const { return widths_.front(); }
  int output_width() const { return widths_.back(); }
  std::vector<Param<T>>& params() { return params_; }
  const std::vector<Param<T>>& params() const { return params_; }
  const std::vector<bool>& group_trainable() const { return trainable_; }

  Gradients<T> zero_gradients() const {
    Gradients<T> g(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i)
      g[i].assign(params_[i].size(), T(0));
    return g;
  }

  std::vector<T> forward(std::span<const T> x, std::size_t n) const {
    return run(x, n, nullptr);
  }

  T loss_and_grad(std::span<const T> x, std::size_t n,
                  const TargetBatch<T>& targets, const LossConfig& loss,
                  Gradients<T>& grads) const {
    std::vector<std::vector<T>> acts;  // pre-activations per layer
    std::vector<T> logits = run(x, n, &acts);
    std::vector<T> dlogits;
    const T value = loss_and_logit_grad(
        loss, std::span<const T>(logits), n,
        static_cast<std::size_t>(output_width()), targets, dlogits);
    for (auto& g : grads) std::fill(g.begin(), g.end(), T(0));

    // acts[l] holds the input fed to layer l (post-ReLU for l > 0).
    std::vector<T> dy = std::move(dlogits);
    for (int l = static_cast<int>(widths_.size()) - 2; l >= 0; --l) {
      const std::size_t in = static_cast<std::size_t>(widths_[l]);
      const std::size_t out = static_cast<std::size_t>(widths_[l + 1]);
      const std::size_t wi = 2 * static_cast<std::size_t>(l);
      std::vector<T> dx(n * in);
      linear_backward(acts[l].data(), params_[wi].value.data(), dy.data(),
                      l > 0 ? dx.data() : static_cast<T*>(nullptr),
                      grads[wi].data(), grads[wi + 1].data(), n, in, out);
      if (l > 0) {
        // ReLU mask from the layer input (post-activation values).
        for (std::size_t i = 0; i < n * in; ++i)
          if (acts[l][i] <= T(0)) dx[i] = T(0);
        dy = std::move(dx);
      }
    }
    return value;
  }

 private:
  std::vector<T> run(std::span<const T> x, std::size_t n,
                     std::vector<std::vector<T>>* acts) const {
    if (x.size() != n * static_cast<std::size_t>(widths_.front()))
      throw ValidationError("mlp input does not match n*input_width");
    std::vector<T> cur(x.begin(), x.end());
    if (acts) acts->push_back(cur);
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      const std::size_t in = static_cast<std::size_t>(widths_[l]);
      const std::size_t out = static_cast<std::size_t>(widths_[l + 1]);
      std::vector<T> next(n * out);
      linear_forward(cur.data(), params_[2 * l].value.data(),
                     params_[2 * l + 1].value.data(), next.data(), n, in,
                     out);
      if (l + 2 < widths_.size())
        for (auto& v : next) v = std::max(v, T(0));
      cur = std::move(next);
      if (acts && l + 2 < widths_.size()) acts->push_back(cur);
    }
    return cur;
  }

  std::vector<int> widths_;
  std::vector<Param<T>> params_;
  std::vector<bool> trainable_;
};

}  // namespace evostack::nn
