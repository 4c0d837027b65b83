#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "evostack/util.hpp"

namespace evostack::nn {

enum class HeadKind { Binary, MultiLabel, MultiClass };

struct HeadDescriptor {
  HeadKind kind = HeadKind::MultiClass;
  int width = 1;

  static HeadDescriptor binary() { return {HeadKind::Binary, 1}; }
  static HeadDescriptor multi_label(int labels) {
    return {HeadKind::MultiLabel, labels};
  }
  static HeadDescriptor multi_class(int classes) {
    return {HeadKind::MultiClass, classes};
  }

  void validate() const {
    if (width < 1) throw ValidationError("head width must be >= 1");
    if (kind == HeadKind::Binary && width != 1)
      throw ValidationError("binary head must have width 1");
  }
};

enum class LossKind { Bce, MultilabelBce, SoftmaxCe, Focal };

struct LossConfig {
  LossKind kind = LossKind::SoftmaxCe;
  double gamma = 2.0;  // focal only
  double alpha = 1.0;  // focal only

  static LossConfig for_head(HeadKind k) {
    switch (k) {
      case HeadKind::Binary: return {LossKind::Bce};
      case HeadKind::MultiLabel: return {LossKind::MultilabelBce};
      case HeadKind::MultiClass: return {LossKind::SoftmaxCe};
    }
    return {LossKind::SoftmaxCe};
  }
};

// Non-owning view of one batch's targets: ids for Bce/SoftmaxCe/Focal,
// multi_hot (n x width, row-major) for MultilabelBce.
template <class T>
struct TargetBatch {
  std::span<const std::uint16_t> ids;
  std::span<const T> multi_hot;
};

template <class T>
struct LossValue {
  T loss = T(0);
};

namespace detail {

template <class T>
T softplus(T z) {
  return std::max(z, T(0)) + std::log1p(std::exp(-std::abs(z)));
}

template <class T>
T sigmoid(T z) {
  return T(1) / (T(1) + std::exp(-z));
}

}  // namespace detail

// Mean-reduced loss over the batch and, for MultilabelBce, over label
// columns. dlogits is resized and overwritten.
template <class T>
T loss_and_logit_grad(const LossConfig& cfg, std::span<const T> logits,
                      std::size_t n, std::size_t width,
                      const TargetBatch<T>& targets,
                      std::vector<T>& dlogits) {
  if (logits.size() != n * width)
    throw ValidationError("logit buffer does not match n*width");
  dlogits.assign(n * width, T(0));
  if (n == 0) return T(0);
  double total = 0.0;

  switch (cfg.kind) {
    case LossKind::Bce: {
      if (width != 1) throw ValidationError("bce expects head width 1");
      if (targets.ids.size() != n)
        throw ValidationError("bce target count mismatch");
      const T inv_n = T(1) / static_cast<T>(n);
      for (std::size_t i = 0; i < n; ++i) {
        const T z = logits[i];
        const T y = static_cast<T>(targets.ids[i]);
        total += static_cast<double>(detail::softplus(z) - z * y);
        dlogits[i] = (detail::sigmoid(z) - y) * inv_n;
      }
      return static_cast<T>(total / static_cast<double>(n));
    }

    case LossKind::MultilabelBce: {
      if (targets.multi_hot.size() != n * width)
        throw ValidationError("multilabel target size mismatch");
      const T inv = T(1) / static_cast<T>(n * width);
      for (std::size_t i = 0; i < n * width; ++i) {
        const T z = logits[i];
        const T y = targets.multi_hot[i];
        total += static_cast<double>(detail::softplus(z) - z * y);
        dlogits[i] = (detail::sigmoid(z) - y) * inv;
      }
      return static_cast<T>(total / static_cast<double>(n * width));
    }

    case LossKind::SoftmaxCe:
    case LossKind::Focal: {
      if (targets.ids.size() != n)
        throw ValidationError("classification target count mismatch");
      const double gamma = cfg.kind == LossKind::Focal ? cfg.gamma : 0.0;
      const double alpha = cfg.kind == LossKind::Focal ? cfg.alpha : 1.0;
      std::vector<T> probs(width);
      const T inv_n = T(1) / static_cast<T>(n);
      for (std::size_t i = 0; i < n; ++i) {
        const T* row = logits.data() + i * width;
        const std::size_t t = targets.ids[i];
        if (t >= width)
          throw ValidationError("target class id out of range");
        T mx = row[0];
        for (std::size_t j = 1; j < width; ++j) mx = std::max(mx, row[j]);
        T sum = T(0);
        for (std::size_t j = 0; j < width; ++j) {
          probs[j] = std::exp(row[j] - mx);
          sum += probs[j];
        }
        for (std::size_t j = 0; j < width; ++j) probs[j] /= sum;

        const double pt =
            std::max(static_cast<double>(probs[t]), 1e-12);
        const double focus = std::pow(1.0 - pt, gamma);
        total += -alpha * focus * std::log(pt);

        // dL/dp_t, then chain through softmax: dz_j = dL/dp_t * p_t *
        // (delta_tj - p_j).
        const double dldp =
            alpha * (gamma > 0.0
                         ? gamma * std::pow(1.0 - pt, gamma - 1.0) *
                                   std::log(pt) -
                               focus / pt
                         : -1.0 / pt);
        T* drow = dlogits.data() + i * width;
        for (std::size_t j = 0; j < width; ++j) {
          const double delta = (j == t) ? 1.0 : 0.0;
          drow[j] = static_cast<T>(dldp * pt *
                                   (delta - static_cast<double>(probs[j]))) *
                    inv_n;
        }
      }
      return static_cast<T>(total / static_cast<double>(n));
    }
  }
  throw ValidationError("unknown loss kind");
}

}  // namespace evostack::nn
