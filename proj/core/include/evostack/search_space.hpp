#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "evostack/util.hpp"

namespace evostack {

// One transformer layer of an architecture genome: attention head count,
// feed-forward hidden width, dropout rate, plus an ordered map of optional
// extra dimensions (empty unless the space declares them).
struct LayerGene {
  int heads = 0;
  int mlp_dim = 0;
  double dropout = 0.0;
  std::map<std::string, double> extra;

  bool operator==(const LayerGene&) const = default;
};

struct Chromosome {
  std::vector<LayerGene> layers;

  int length() const { return static_cast<int>(layers.size()); }
  bool operator==(const Chromosome&) const = default;
};

// Model hyperparameters that are not evolved. hidden_dim is the width of the
// classifier-head input produced by the readout projection; embed_dim is the
// token width used by every block.
struct FixedHyperparams {
  int hidden_dim = 512;
  int embed_dim = 768;
  int image_size = 224;
  int patch_size = 16;
  int channels = 3;
};

// Declares an additional per-layer gene dimension: values are drawn from
// [low, high] on the same millistep grid used for dropout.
struct ExtraDimSpec {
  std::string key;
  double low = 0.0;
  double high = 0.0;
  double step = 0.001;
};

// The legal gene domains. Construction validates every invariant; instances
// are immutable afterwards and safe to share across threads.
class SearchSpace {
 public:
  SearchSpace(std::vector<int> head_choices, std::vector<int> mlp_dim_choices,
              double dropout_low, double dropout_high, int min_layers,
              int max_layers, FixedHyperparams fixed,
              double dropout_step = 0.001,
              std::vector<ExtraDimSpec> extra_dims = {});

  const std::vector<int>& head_choices() const { return head_choices_; }
  const std::vector<int>& mlp_dim_choices() const { return mlp_dim_choices_; }
  double dropout_low() const { return dropout_low_; }
  double dropout_high() const { return dropout_high_; }
  double dropout_step() const { return dropout_step_; }
  int min_layers() const { return min_layers_; }
  int max_layers() const { return max_layers_; }
  const FixedHyperparams& fixed() const { return fixed_; }
  const std::vector<ExtraDimSpec>& extra_dims() const { return extra_dims_; }

  int dropout_grid_size() const;
  double dropout_at(int idx) const;

  bool contains(const LayerGene& gene) const;
  bool contains(const Chromosome& c) const;
  void require(const Chromosome& c) const;  // throws ValidationError

 private:
  std::vector<int> head_choices_;
  std::vector<int> mlp_dim_choices_;
  double dropout_low_;
  double dropout_high_;
  double dropout_step_;
  int min_layers_;
  int max_layers_;
  FixedHyperparams fixed_;
  std::vector<ExtraDimSpec> extra_dims_;
};

// A chromosome together with its (lazily assigned) fitness in [0, 1].
struct Individual {
  Chromosome chromosome;
  std::optional<double> fitness;
};

LayerGene random_gene(const SearchSpace& space, RngStream& rng);
Chromosome random_chromosome(const SearchSpace& space, RngStream& rng);

// Canonical text key, injective over valid chromosomes:
//   "L" <len> ("|h" <heads> ",m" <mlp> ",d" <dropout-3dp>
//              ("," <key> "=" <val-3dp>)*)*len
// Dropout and extras print with exactly three digits after the decimal
// point; extras appear in lexicographic key order. Used verbatim as the
// fitness-cache key and in run logs.
std::string canonical_encode(const Chromosome& c);

// Strict inverse of canonical_encode; throws ValidationError on malformed
// input.
Chromosome canonical_decode(std::string_view key);

// Architecture JSON ("layers" array plus "fixed" object). Keys emit in a
// fixed documented order.
std::string architecture_to_json(const Chromosome& c,
                                 const FixedHyperparams& fixed);
std::pair<Chromosome, FixedHyperparams> architecture_from_json(
    std::string_view text);

void save_architecture(const Chromosome& c, const FixedHyperparams& fixed,
                       const std::string& path);
std::pair<Chromosome, FixedHyperparams> load_architecture(
    const std::string& path);

}  // namespace evostack
