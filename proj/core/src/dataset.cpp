#include "evostack/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>
#include <zlib.h>

static_assert(std::endian::native == std::endian::little,
              "tensor files are little-endian; big-endian hosts unsupported");

namespace evostack {

const char* target_kind_name(TargetKind k) {
  switch (k) {
    case TargetKind::Single: return "single";
    case TargetKind::Binary: return "binary";
    case TargetKind::MultiLabel: return "multilabel";
  }
  return "single";
}

TargetKind target_kind_from_name(const std::string& name) {
  if (name == "single") return TargetKind::Single;
  if (name == "binary") return TargetKind::Binary;
  if (name == "multilabel") return TargetKind::MultiLabel;
  throw ManifestError("unknown target_kind '" + name + "'");
}

void TensorDataset::validate() const {
  if (n < 0 || channels <= 0 || height <= 0 || width <= 0)
    throw ManifestError("non-positive tensor dimensions");
  if (images.size() != static_cast<std::size_t>(n) * image_floats())
    throw ManifestError("image payload size does not match n*c*h*w");
  if (label_width <= 0) throw ManifestError("label_width must be positive");
  switch (kind) {
    case TargetKind::Single: {
      if (labels.size() != static_cast<std::size_t>(n))
        throw ManifestError("label count does not match n");
      std::uint16_t max_label = 0;
      for (auto v : labels) max_label = std::max(max_label, v);
      if (n > 0 && static_cast<int>(max_label) >= label_width)
        throw ManifestError("manifest label_width " +
                            std::to_string(label_width) +
                            " inconsistent with max label " +
                            std::to_string(max_label));
      break;
    }
    case TargetKind::Binary:
      if (labels.size() != static_cast<std::size_t>(n))
        throw ManifestError("label count does not match n");
      for (auto v : labels)
        if (v > 1) throw ManifestError("binary target outside {0,1}");
      break;
    case TargetKind::MultiLabel:
      if (label_bits.size() != static_cast<std::size_t>(n) * bits_row_bytes())
        throw ManifestError("label bit rows do not match n");
      break;
  }
  if (!class_names.empty() &&
      class_names.size() != static_cast<std::size_t>(label_width) &&
      kind != TargetKind::Binary)
    throw ManifestError("class_names length does not match label_width");
}

void SynthSpec::validate() const {
  if (classes < 1) throw ValidationError("classes must be >= 1");
  if (image_size < 8) throw ValidationError("image_size must be >= 8");
  if (channels < 1) throw ValidationError("channels must be >= 1");
  if (noise_level < 0.0 || noise_level >= 1.0)
    throw ValidationError("noise_level must be in [0, 1)");
  if (items_per_class.empty())
    throw ValidationError("items_per_class is empty");
  if (items_per_class.size() != 1 &&
      items_per_class.size() != static_cast<std::size_t>(classes))
    throw ValidationError("items_per_class must have 1 or `classes` entries");
  for (int c : items_per_class)
    if (c < 1) throw ValidationError("items_per_class entries must be >= 1");
}

TensorDataset synth_generate(const SynthSpec& spec) {
  spec.validate();
  std::vector<int> counts(spec.classes,
                          spec.items_per_class.front());
  if (spec.items_per_class.size() > 1)
    counts = spec.items_per_class;

  TensorDataset data;
  data.channels = spec.channels;
  data.height = spec.image_size;
  data.width = spec.image_size;
  data.kind = TargetKind::Single;
  data.label_width = spec.classes;
  for (int c = 0; c < spec.classes; ++c)
    data.class_names.push_back("class_" + std::to_string(c));

  const int hw = spec.image_size;
  const RngStream root(spec.seed);

  // Each class owns a fixed template (intensity band, stripe field with a
  // class-fixed phase, blob layout on class-fixed centers); items vary by a
  // one-pixel translation, a brightness factor, and pixel noise. Keeping
  // phases and centers class-fixed is what makes a linear probe work.
  struct Blob {
    double cx, cy, amp, radius;
  };
  for (int cls = 0; cls < spec.classes; ++cls) {
    const double denom = spec.classes > 1 ? spec.classes - 1.0 : 1.0;
    const double base = 0.2 + 0.6 * cls / denom;
    const double freq = 2.0 + static_cast<double>(cls % 3);
    const double angle = (cls % 4) * std::numbers::pi / 4.0;
    const int blob_count = 1 + cls % 3;

    RngStream class_rng = root.derive("class").derive(
        static_cast<std::uint64_t>(cls));
    const double phase = class_rng.uniform_real(0.0,
                                                2.0 * std::numbers::pi);
    std::vector<Blob> blobs(blob_count);
    for (auto& b : blobs) {
      b.cx = class_rng.uniform_real(0.25, 0.75) * hw;
      b.cy = class_rng.uniform_real(0.25, 0.75) * hw;
      b.amp = cls % 2 == 0 ? 0.22 : -0.22;
      b.radius = hw * class_rng.uniform_real(0.10, 0.16);
    }

    auto template_at = [&](double x, double y) {
      const double u = (x * std::cos(angle) + y * std::sin(angle)) /
                       static_cast<double>(hw);
      double v = base +
                 0.15 * std::sin(2.0 * std::numbers::pi * freq * u + phase);
      for (const auto& b : blobs) {
        const double dx = x - b.cx;
        const double dy = y - b.cy;
        v += b.amp *
             std::exp(-(dx * dx + dy * dy) / (2.0 * b.radius * b.radius));
      }
      return v;
    };

    for (int item = 0; item < counts[cls]; ++item) {
      RngStream rng = root.derive("item").derive(
          static_cast<std::uint64_t>(cls) << 32 |
          static_cast<std::uint64_t>(item));
      const double shift_x = static_cast<double>(rng.uniform_index(3)) - 1.0;
      const double shift_y = static_cast<double>(rng.uniform_index(3)) - 1.0;
      const double brightness = rng.uniform_real(0.92, 1.08);

      for (int ch = 0; ch < spec.channels; ++ch) {
        const double ch_scale = 1.0 - 0.08 * ch;
        for (int y = 0; y < hw; ++y) {
          for (int x = 0; x < hw; ++x) {
            double v = template_at(x + shift_x, y + shift_y);
            v = v * brightness * ch_scale +
                spec.noise_level * 0.25 * rng.normal();
            data.images.push_back(
                static_cast<float>(std::clamp(v, 0.0, 1.0)));
          }
        }
      }
      data.labels.push_back(static_cast<std::uint16_t>(cls));
      ++data.n;
    }
  }
  data.validate();
  return data;
}

namespace {

std::uint32_t crc32_of(std::span<const std::uint8_t> a,
                       std::span<const std::uint8_t> b) {
  uLong crc = crc32(0L, Z_NULL, 0);
  if (!a.empty()) crc = crc32(crc, a.data(), static_cast<uInt>(a.size()));
  if (!b.empty()) crc = crc32(crc, b.data(), static_cast<uInt>(b.size()));
  return static_cast<std::uint32_t>(crc);
}

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%08x", v);
  return buf;
}

void write_file(const std::filesystem::path& p,
                std::span<const std::uint8_t> bytes) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot open " + p.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + p.string());
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& p,
                                    std::size_t expected) {
  std::ifstream in(p, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open " + p.string());
  const auto size = static_cast<std::size_t>(in.tellg());
  if (size != expected)
    throw TruncatedFileError(p.string() + ": expected " +
                             std::to_string(expected) + " bytes, found " +
                             std::to_string(size));
  in.seekg(0);
  std::vector<std::uint8_t> bytes(size);
  in.read(reinterpret_cast<char*>(bytes.data()),
          static_cast<std::streamsize>(size));
  if (!in) throw TruncatedFileError(p.string() + ": short read");
  return bytes;
}

constexpr int kFormatVersion = 1;

}  // namespace

void save_dataset(const TensorDataset& data,
                  const std::filesystem::path& dir) {
  data.validate();
  std::filesystem::create_directories(dir);

  std::span<const std::uint8_t> image_bytes{
      reinterpret_cast<const std::uint8_t*>(data.images.data()),
      data.images.size() * sizeof(float)};

  std::vector<std::uint8_t> target_bytes;
  std::string target_file;
  if (data.kind == TargetKind::MultiLabel) {
    target_file = "targets.bits";
    target_bytes.assign(data.label_bits.begin(), data.label_bits.end());
  } else {
    target_file = "targets.u16le";
    target_bytes.resize(data.labels.size() * sizeof(std::uint16_t));
    std::memcpy(target_bytes.data(), data.labels.data(), target_bytes.size());
  }

  nlohmann::ordered_json manifest;
  manifest["format_version"] = kFormatVersion;
  manifest["n"] = data.n;
  manifest["channels"] = data.channels;
  manifest["height"] = data.height;
  manifest["width"] = data.width;
  manifest["target_kind"] = target_kind_name(data.kind);
  manifest["label_width"] = data.label_width;
  manifest["class_names"] = data.class_names;
  manifest["checksum"] = hex32(crc32_of(image_bytes, target_bytes));

  write_file(dir / "images.f32le", image_bytes);
  write_file(dir / target_file, target_bytes);

  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw IoError("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
  if (!out) throw IoError("failed writing manifest in " + dir.string());
}

TensorDataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json", std::ios::binary);
  if (!in) throw IoError("cannot open " + (dir / "manifest.json").string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError(std::string("malformed manifest: ") + e.what());
  }

  TensorDataset data;
  try {
    if (manifest.at("format_version").get<int>() != kFormatVersion)
      throw ManifestError("unsupported format_version");
    data.n = manifest.at("n").get<int>();
    data.channels = manifest.at("channels").get<int>();
    data.height = manifest.at("height").get<int>();
    data.width = manifest.at("width").get<int>();
    data.kind = target_kind_from_name(
        manifest.at("target_kind").get<std::string>());
    data.label_width = manifest.at("label_width").get<int>();
    data.class_names =
        manifest.at("class_names").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError(std::string("malformed manifest: ") + e.what());
  }
  if (data.n < 0 || data.channels <= 0 || data.height <= 0 || data.width <= 0)
    throw ManifestError("manifest dimensions must be positive");
  if (data.label_width <= 0)
    throw ManifestError("manifest label_width must be positive");

  const std::size_t image_count =
      static_cast<std::size_t>(data.n) * data.image_floats();
  auto image_bytes = read_file(dir / "images.f32le",
                               image_count * sizeof(float));

  std::vector<std::uint8_t> target_bytes;
  if (data.kind == TargetKind::MultiLabel) {
    target_bytes = read_file(dir / "targets.bits",
                             static_cast<std::size_t>(data.n) *
                                 data.bits_row_bytes());
    data.label_bits = target_bytes;
  } else {
    target_bytes = read_file(dir / "targets.u16le",
                             static_cast<std::size_t>(data.n) *
                                 sizeof(std::uint16_t));
    data.labels.resize(static_cast<std::size_t>(data.n));
    std::memcpy(data.labels.data(), target_bytes.data(), target_bytes.size());
  }

  const std::string expected =
      manifest.at("checksum").get<std::string>();
  const std::string actual = hex32(crc32_of(image_bytes, target_bytes));
  if (expected != actual)
    throw ChecksumError("checksum mismatch: manifest " + expected +
                        ", payload " + actual);

  data.images.resize(image_count);
  std::memcpy(data.images.data(), image_bytes.data(), image_bytes.size());
  data.validate();
  return data;
}

}  // namespace evostack
