#pragma once

#include <span>
#include <string>
#include <vector>

#include "evostack/dataset.hpp"
#include "evostack/metrics.hpp"
#include "evostack/nn/vit.hpp"

namespace evostack::nn {

enum class UnfreezeStrategy { Full, Gradual };

const char* unfreeze_strategy_name(UnfreezeStrategy s);
UnfreezeStrategy unfreeze_strategy_from_name(const std::string& name);

struct FitOptions {
  int epochs = 5;
  double learning_rate = 0.01;
  double momentum = 0.9;
  int batch_size = 16;
  UnfreezeStrategy strategy = UnfreezeStrategy::Full;
  LossConfig loss;
  double max_grad_norm = 1.0;  // global L2 clip; <= 0 disables
};

// The dataset's target kind must match the model head: Single labels with a
// MultiClass head of matching width, Binary with Binary, MultiLabel with a
// MultiLabel head of matching width.
void check_head_compatible(const HeadDescriptor& head,
                           const TensorDataset& data);

namespace detail {

template <class T>
void gather_batch(const TensorDataset& data, std::span<const int> idx,
                  const HeadDescriptor& head, std::vector<T>& images,
                  std::vector<std::uint16_t>& ids, std::vector<T>& multi_hot) {
  const std::size_t floats = data.image_floats();
  images.resize(idx.size() * floats);
  ids.clear();
  multi_hot.clear();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto img = data.image(idx[i]);
    for (std::size_t j = 0; j < floats; ++j)
      images[i * floats + j] = static_cast<T>(img[j]);
    if (head.kind == HeadKind::MultiLabel) {
      for (int bit = 0; bit < head.width; ++bit)
        multi_hot.push_back(data.label_bit(idx[i], bit) ? T(1) : T(0));
    } else {
      ids.push_back(data.labels[idx[i]]);
    }
  }
}

template <class T>
void shuffle(std::vector<T>& v, RngStream& rng) {
  for (std::size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[rng.uniform_index(i)]);
}

template <class T>
void clip_grad_norm(Gradients<T>& grads, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (const auto& g : grads)
    for (T v : g) sq += static_cast<double>(v) * static_cast<double>(v);
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const T scale = static_cast<T>(max_norm / norm);
  for (auto& g : grads)
    for (T& v : g) v *= scale;
}

}  // namespace detail

// Minibatch SGD over the given index subset. Gradual unfreezing starts from
// the readout alone and opens one more block each epoch.
template <class T>
void fit_vit(TrainState<T>& state, const TensorDataset& data,
             std::span<const int> indices, const FitOptions& opt) {
  check_head_compatible(state.model.head(), data);
  if (opt.batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (static_cast<std::size_t>(opt.batch_size) > indices.size())
    throw ValidationError("batch_size exceeds training subset size");

  const int full_depth = state.model.blocks() + 1;
  Gradients<T> grads = state.model.zero_gradients();
  std::vector<int> order(indices.begin(), indices.end());
  std::vector<T> images, multi_hot;
  std::vector<std::uint16_t> ids;

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    const int depth = opt.strategy == UnfreezeStrategy::Full
                          ? full_depth
                          : std::min(state.epoch, full_depth);
    state.model.set_unfreeze_depth(depth);
    detail::shuffle(order, state.rng);

    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(opt.batch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(
                                             opt.batch_size));
      const std::span<const int> batch_idx(order.data() + start,
                                           stop - start);
      detail::gather_batch(data, batch_idx, state.model.head(), images, ids,
                           multi_hot);
      TargetBatch<T> targets{ids, multi_hot};
      const auto result = state.model.loss_and_grad(
          std::span<const T>(images), batch_idx.size(), targets, opt.loss,
          grads, &state.rng);
      if (!std::isfinite(static_cast<double>(result.loss)))
        throw TrainingDivergence(
            "non-finite loss at epoch " + std::to_string(state.epoch) +
            ", batch starting at item " + std::to_string(start));
      detail::clip_grad_norm(grads, opt.max_grad_norm);
      sgd_step(state, grads, opt.learning_rate, opt.momentum);
    }
    ++state.epoch;
  }
}

// Per-label confusion counts on an index subset, in infer mode.
// MultiClass: one-vs-rest counts from the argmax prediction per class.
// Binary: a single positive-class entry. MultiLabel: one entry per column
// thresholded at probability 0.5.
std::vector<ConfusionCounts> confusion_by_label(
    const VitModel<float>& model, const TensorDataset& data,
    std::span<const int> indices);

// Macro-F1 for MultiClass/MultiLabel; plain positive-class F1 for Binary.
double holdout_f1(const VitModel<float>& model, const TensorDataset& data,
                  std::span<const int> indices);

}  // namespace evostack::nn
