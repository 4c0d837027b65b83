#pragma once

#include <string>
#include <vector>

#include "evostack/nn/losses.hpp"
#include "evostack/nn/ops.hpp"
#include "evostack/search_space.hpp"
#include "evostack/util.hpp"

namespace evostack::nn {

template <class T>
struct Param {
  std::string name;
  int group = 0;
  std::vector<std::size_t> shape;
  std::vector<T> value;

  std::size_t size() const { return value.size(); }
};

template <class T>
using Gradients = std::vector<std::vector<T>>;

enum class Mode { Train, Infer };

// Vision transformer realized from a chromosome: patch embedding with a
// class token, pre-normalization blocks (multi-head attention + GELU
// feed-forward, per-layer dropout), final layernorm, then a GELU projection
// to hidden_dim feeding the classification head.
//
// Parameter groups: 0 = embeddings, 1..blocks = transformer blocks,
// blocks+1 = readout (final norm, projection, head). The readout group is
// always trainable; set_unfreeze_depth controls the rest.
template <class T>
class VitModel {
 public:
  VitModel(Chromosome arch, FixedHyperparams fixed, HeadDescriptor head,
           RngStream& init_rng);

  const Chromosome& arch() const { return arch_; }
  const FixedHyperparams& fixed() const { return fixed_; }
  const HeadDescriptor& head() const { return head_; }
  int blocks() const { return arch_.length(); }
  int seq_len() const { return seq_len_; }
  int group_count() const { return blocks() + 2; }

  std::vector<Param<T>>& params() { return params_; }
  const std::vector<Param<T>>& params() const { return params_; }
  const std::vector<bool>& group_trainable() const { return trainable_; }

  // depth 0 trains the readout only; depth blocks()+1 trains everything,
  // embeddings included.
  void set_unfreeze_depth(int depth);

  Gradients<T> zero_gradients() const;

  // batch: n * channels * image_size^2, row-major. Returns n * head.width
  // logits. Infer mode ignores dropout; Train mode needs an rng unless every
  // layer's dropout is zero.
  std::vector<T> forward(std::span<const T> batch, std::size_t n, Mode mode,
                         RngStream* dropout_rng = nullptr) const;

  // Loss + parameter gradients (frozen groups exactly zero). Dropout is
  // active only when dropout_rng is non-null.
  LossValue<T> loss_and_grad(std::span<const T> batch, std::size_t n,
                             const TargetBatch<T>& targets,
                             const LossConfig& loss, Gradients<T>& grads,
                             RngStream* dropout_rng = nullptr) const;

 private:
  struct BlockIdx {
    int ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
    int ln2_g, ln2_b, w1, b1, w2, b2;
  };

  struct Trace;  // forward intermediates, defined in vit_impl

  int add_param(const std::string& name, int group,
                std::vector<std::size_t> shape, double init_scale,
                RngStream& rng);

  std::vector<T> run_forward(std::span<const T> batch, std::size_t n,
                             Mode mode, RngStream* dropout_rng,
                             Trace* trace) const;
  void run_backward(const Trace& trace, std::span<const T> dlogits,
                    Gradients<T>& grads) const;

  Chromosome arch_;
  FixedHyperparams fixed_;
  HeadDescriptor head_;
  int patches_ = 0;
  int seq_len_ = 0;
  int patch_dim_ = 0;

  std::vector<Param<T>> params_;
  std::vector<bool> trainable_;

  int patch_w_, patch_b_, cls_, pos_;
  std::vector<BlockIdx> blocks_idx_;
  int fln_g_, fln_b_, proj_w_, proj_b_, head_w_, head_b_;
};

template <class T>
struct TrainState {
  VitModel<T> model;
  Gradients<T> velocity;
  int epoch = 0;
  RngStream rng;

  TrainState(VitModel<T> m, RngStream stream)
      : model(std::move(m)),
        velocity(model.zero_gradients()),
        rng(std::move(stream)) {}
};

// v <- momentum*v + g; p <- p - lr*v. Frozen groups are skipped entirely.
template <class T>
void sgd_step(std::vector<Param<T>>& params,
              const std::vector<bool>& group_trainable, Gradients<T>& velocity,
              const Gradients<T>& grads, double learning_rate,
              double momentum) {
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!group_trainable[params[p].group]) continue;
    auto& value = params[p].value;
    auto& vel = velocity[p];
    const auto& g = grads[p];
    for (std::size_t i = 0; i < value.size(); ++i) {
      vel[i] = static_cast<T>(momentum) * vel[i] + g[i];
      value[i] -= static_cast<T>(learning_rate) * vel[i];
    }
  }
}

template <class T>
void sgd_step(TrainState<T>& state, const Gradients<T>& grads,
              double learning_rate, double momentum) {
  sgd_step(state.model.params(), state.model.group_trainable(),
           state.velocity, grads, learning_rate, momentum);
}

template <class T>
VitModel<T> build_model(const Chromosome& arch, const FixedHyperparams& fixed,
                        const HeadDescriptor& head, RngStream& init_rng) {
  return VitModel<T>(arch, fixed, head, init_rng);
}

}  // namespace evostack::nn

#include "evostack/nn/vit_impl.hpp"
