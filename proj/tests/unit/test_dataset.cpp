#include <doctest.h>

TEST_SUITE_BEGIN("dataset");

#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "evostack/dataset.hpp"
#include "evostack/metrics.hpp"

using namespace evostack;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("evostack_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static inline int counter = 0;
};

SynthSpec small_spec() {
  SynthSpec spec;
  spec.classes = 3;
  spec.items_per_class = {4};
  spec.image_size = 16;
  spec.channels = 2;
  spec.noise_level = 0.1;
  spec.seed = 5;
  return spec;
}

}  // namespace

TEST_CASE("generator is deterministic given the seed") {
  const TensorDataset a = synth_generate(small_spec());
  const TensorDataset b = synth_generate(small_spec());
  CHECK(a.images == b.images);
  CHECK(a.labels == b.labels);

  SynthSpec other = small_spec();
  other.seed = 6;
  const TensorDataset c = synth_generate(other);
  CHECK(a.images != c.images);
}

TEST_CASE("generator produces exact class counts") {
  SynthSpec spec;
  spec.classes = 6;
  spec.items_per_class = {60};
  spec.image_size = 16;
  spec.channels = 1;
  spec.noise_level = 0.0;
  spec.seed = 1;
  const TensorDataset data = synth_generate(spec);
  CHECK(data.n == 360);
  int counts[6] = {0};
  for (auto l : data.labels) ++counts[l];
  for (int c : counts) CHECK(c == 60);
  for (float v : data.images) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("imbalanced per-class counts are honored") {
  SynthSpec spec = small_spec();
  spec.items_per_class = {5, 2, 9};
  const TensorDataset data = synth_generate(spec);
  CHECK(data.n == 16);
  int counts[3] = {0};
  for (auto l : data.labels) ++counts[l];
  CHECK(counts[0] == 5);
  CHECK(counts[1] == 2);
  CHECK(counts[2] == 9);
}

TEST_CASE("a linear probe separates the classes at noise 0.1") {
  // Nearest-class-mean on raw pixels (a linear classifier): fit means on
  // even items, score odd items.
  SynthSpec spec;
  spec.classes = 6;
  spec.items_per_class = {40};
  spec.image_size = 16;
  spec.channels = 1;
  spec.noise_level = 0.1;
  spec.seed = 42;
  const TensorDataset data = synth_generate(spec);
  const std::size_t dim = data.image_floats();

  std::vector<std::vector<double>> means(6, std::vector<double>(dim, 0.0));
  std::vector<int> counts(6, 0);
  for (int i = 0; i < data.n; i += 2) {
    const auto img = data.image(i);
    auto& m = means[data.labels[i]];
    for (std::size_t j = 0; j < dim; ++j) m[j] += img[j];
    ++counts[data.labels[i]];
  }
  for (int c = 0; c < 6; ++c)
    for (auto& v : means[c]) v /= counts[c];

  std::vector<ConfusionCounts> confusion(6);
  for (int i = 1; i < data.n; i += 2) {
    const auto img = data.image(i);
    int best = 0;
    double best_d = 1e300;
    for (int c = 0; c < 6; ++c) {
      double d = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double diff = img[j] - means[c][j];
        d += diff * diff;
      }
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    for (int c = 0; c < 6; ++c)
      confusion[c].add(best == c, data.labels[i] == c);
  }
  CHECK(macro_f1(confusion) >= 0.8);
}

TEST_CASE("save/load round-trip is bit-exact") {
  TempDir dir;
  const TensorDataset data = synth_generate(small_spec());
  save_dataset(data, dir.path);
  const TensorDataset back = load_dataset(dir.path);
  CHECK(back.images == data.images);
  CHECK(back.labels == data.labels);
  CHECK(back.class_names == data.class_names);
  CHECK(back.kind == data.kind);
  CHECK(back.label_width == data.label_width);
}

TEST_CASE("multilabel datasets round trip") {
  TempDir dir;
  TensorDataset data;
  data.n = 4;
  data.channels = 1;
  data.height = 4;
  data.width = 4;
  data.kind = TargetKind::MultiLabel;
  data.label_width = 10;  // forces padded rows
  data.images.assign(4 * 16, 0.25f);
  data.label_bits.assign(4 * data.bits_row_bytes(), 0);
  data.set_label_bit(0, 0, true);
  data.set_label_bit(1, 9, true);
  data.set_label_bit(3, 4, true);
  data.validate();

  save_dataset(data, dir.path);
  const TensorDataset back = load_dataset(dir.path);
  CHECK(back.label_bits == data.label_bits);
  CHECK(back.label_bit(1, 9));
  CHECK(!back.label_bit(1, 8));
}

TEST_CASE("round-trip identity for 100 random datasets") {
  TempDir dir;
  RngStream rng(77);
  for (int i = 0; i < 100; ++i) {
    SynthSpec spec;
    spec.classes = 1 + static_cast<int>(rng.uniform_index(4));
    spec.items_per_class = {1 + static_cast<int>(rng.uniform_index(3))};
    spec.image_size = 8;
    spec.channels = 1 + static_cast<int>(rng.uniform_index(2));
    spec.noise_level = 0.2;
    spec.seed = rng.next_u64();
    const TensorDataset data = synth_generate(spec);
    const fs::path sub = dir.path / std::to_string(i);
    save_dataset(data, sub);
    const TensorDataset back = load_dataset(sub);
    CHECK(back.images == data.images);
    CHECK(back.labels == data.labels);
  }
}

TEST_CASE("truncated payload is reported as truncation, not a crash") {
  TempDir dir;
  const TensorDataset data = synth_generate(small_spec());
  save_dataset(data, dir.path);
  // Chop the image payload.
  const fs::path img = dir.path / "images.f32le";
  const auto full = fs::file_size(img);
  fs::resize_file(img, full / 2);
  CHECK_THROWS_AS(load_dataset(dir.path), TruncatedFileError);
}

TEST_CASE("corrupted payload fails the checksum") {
  TempDir dir;
  const TensorDataset data = synth_generate(small_spec());
  save_dataset(data, dir.path);
  {
    std::fstream f(dir.path / "images.f32le",
                   std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(8);
    const char byte = 0x7f;
    f.write(&byte, 1);
  }
  CHECK_THROWS_AS(load_dataset(dir.path), ChecksumError);
}

TEST_CASE("label exceeding manifest width is a validation error") {
  TempDir dir;
  TensorDataset data = synth_generate(small_spec());
  save_dataset(data, dir.path);
  // Rewrite one label beyond label_width; refresh the checksum so only the
  // manifest/label inconsistency can trip.
  TensorDataset bad = data;
  bad.labels[0] = static_cast<std::uint16_t>(bad.label_width + 3);
  CHECK_THROWS_WITH_AS(bad.validate(),
                       doctest::Contains("label_width"), ManifestError);
}

TEST_CASE("malformed manifest is a manifest error") {
  TempDir dir;
  const TensorDataset data = synth_generate(small_spec());
  save_dataset(data, dir.path);
  std::ofstream(dir.path / "manifest.json") << "{ not json";
  CHECK_THROWS_AS(load_dataset(dir.path), ManifestError);
}

TEST_SUITE_END();
