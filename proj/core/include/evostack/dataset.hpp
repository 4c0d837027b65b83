#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "evostack/util.hpp"

namespace evostack {

// Dataset directory problems, each distinct so callers can tell a bad
// manifest from a short payload from a corrupt one.
struct ManifestError : ValidationError {
  using ValidationError::ValidationError;
};
struct TruncatedFileError : IoError {
  using IoError::IoError;
};
struct ChecksumError : IoError {
  using IoError::IoError;
};

enum class TargetKind { Single, Binary, MultiLabel };

const char* target_kind_name(TargetKind k);
TargetKind target_kind_from_name(const std::string& name);

// Labeled image tensors. images holds n*channels*height*width floats in
// [0, 1], row-major. Targets are class ids (Single), {0,1} (Binary), or
// byte-padded bit rows of label_width bits (MultiLabel). Immutable by
// convention once built; all reads are thread-safe.
struct TensorDataset {
  int n = 0;
  int channels = 0;
  int height = 0;
  int width = 0;
  TargetKind kind = TargetKind::Single;
  int label_width = 0;  // classes (Single), 1 (Binary), bits (MultiLabel)
  std::vector<float> images;
  std::vector<std::uint16_t> labels;     // Single / Binary
  std::vector<std::uint8_t> label_bits;  // MultiLabel, row-major, padded rows
  std::vector<std::string> class_names;  // optional

  std::size_t image_floats() const {
    return static_cast<std::size_t>(channels) * height * width;
  }
  std::span<const float> image(int i) const {
    return {images.data() + static_cast<std::size_t>(i) * image_floats(),
            image_floats()};
  }
  std::size_t bits_row_bytes() const {
    return (static_cast<std::size_t>(label_width) + 7) / 8;
  }
  bool label_bit(int item, int bit) const {
    const std::uint8_t byte =
        label_bits[static_cast<std::size_t>(item) * bits_row_bytes() + bit / 8];
    return (byte >> (bit % 8)) & 1;
  }
  void set_label_bit(int item, int bit, bool value) {
    auto& byte =
        label_bits[static_cast<std::size_t>(item) * bits_row_bytes() + bit / 8];
    if (value)
      byte = static_cast<std::uint8_t>(byte | (1u << (bit % 8)));
    else
      byte = static_cast<std::uint8_t>(byte & ~(1u << (bit % 8)));
  }

  void validate() const;  // throws ManifestError on inconsistency
};

// Synthetic image generator. Every class renders a distinct procedural
// family (base intensity, stripe frequency/orientation, blob count) plus
// seeded per-item jitter and Gaussian pixel noise, so classes stay
// separable for noise_level <= 0.2.
struct SynthSpec {
  int classes = 6;
  std::vector<int> items_per_class;  // broadcast from one entry if needed
  int image_size = 32;
  int channels = 3;
  double noise_level = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

TensorDataset synth_generate(const SynthSpec& spec);

// Bit-exact directory layout: manifest.json + images.f32le +
// targets.u16le | targets.bits. The manifest carries a CRC-32 over the two
// payload files concatenated (images first), hex-encoded.
void save_dataset(const TensorDataset& data,
                  const std::filesystem::path& dir);
TensorDataset load_dataset(const std::filesystem::path& dir);

}  // namespace evostack
