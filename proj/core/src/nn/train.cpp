#include "evostack/nn/train.hpp"

namespace evostack::nn {

const char* unfreeze_strategy_name(UnfreezeStrategy s) {
  return s == UnfreezeStrategy::Full ? "FU" : "GU";
}

UnfreezeStrategy unfreeze_strategy_from_name(const std::string& name) {
  if (name == "FU") return UnfreezeStrategy::Full;
  if (name == "GU") return UnfreezeStrategy::Gradual;
  throw ValidationError("unknown unfreeze strategy '" + name +
                        "' (expected FU or GU)");
}

void check_head_compatible(const HeadDescriptor& head,
                           const TensorDataset& data) {
  switch (head.kind) {
    case HeadKind::Binary:
      if (data.kind != TargetKind::Binary)
        throw ValidationError("binary head needs binary targets");
      return;
    case HeadKind::MultiClass:
      if (data.kind != TargetKind::Single)
        throw ValidationError("multiclass head needs single-label targets");
      if (head.width != data.label_width)
        throw ValidationError("head width " + std::to_string(head.width) +
                              " != class count " +
                              std::to_string(data.label_width));
      return;
    case HeadKind::MultiLabel:
      if (data.kind != TargetKind::MultiLabel)
        throw ValidationError("multilabel head needs multilabel targets");
      if (head.width != data.label_width)
        throw ValidationError("head width " + std::to_string(head.width) +
                              " != label width " +
                              std::to_string(data.label_width));
      return;
  }
}

std::vector<ConfusionCounts> confusion_by_label(
    const VitModel<float>& model, const TensorDataset& data,
    std::span<const int> indices) {
  check_head_compatible(model.head(), data);
  const HeadDescriptor& head = model.head();
  const std::size_t floats = data.image_floats();

  std::vector<ConfusionCounts> counts;
  if (head.kind == HeadKind::Binary)
    counts.resize(1);
  else
    counts.resize(static_cast<std::size_t>(head.width));

  constexpr std::size_t kEvalBatch = 32;
  std::vector<float> images;
  for (std::size_t start = 0; start < indices.size(); start += kEvalBatch) {
    const std::size_t stop = std::min(indices.size(), start + kEvalBatch);
    const std::size_t n = stop - start;
    images.resize(n * floats);
    for (std::size_t i = 0; i < n; ++i) {
      const auto img = data.image(indices[start + i]);
      std::copy(img.begin(), img.end(), images.begin() + i * floats);
    }
    const std::vector<float> logits =
        model.forward(images, n, Mode::Infer);

    for (std::size_t i = 0; i < n; ++i) {
      const int item = indices[start + i];
      const float* row = logits.data() + i * head.width;
      switch (head.kind) {
        case HeadKind::Binary:
          counts[0].add(row[0] > 0.0f, data.labels[item] == 1);
          break;
        case HeadKind::MultiClass: {
          int pred = 0;
          for (int j = 1; j < head.width; ++j)
            if (row[j] > row[pred]) pred = j;
          for (int j = 0; j < head.width; ++j)
            counts[j].add(pred == j, data.labels[item] == j);
          break;
        }
        case HeadKind::MultiLabel:
          for (int j = 0; j < head.width; ++j)
            counts[j].add(row[j] > 0.0f, data.label_bit(item, j));
          break;
      }
    }
  }
  return counts;
}

double holdout_f1(const VitModel<float>& model, const TensorDataset& data,
                  std::span<const int> indices) {
  const auto counts = confusion_by_label(model, data, indices);
  if (model.head().kind == HeadKind::Binary) return f1_score(counts[0]);
  return macro_f1(counts);
}

}  // namespace evostack::nn
