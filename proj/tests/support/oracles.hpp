#pragma once

// Test-only oracles, independent of the library's implementation paths.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "evostack/search_space.hpp"

namespace testsupport {

using evostack::Chromosome;
using evostack::LayerGene;
using evostack::SearchSpace;

// The 84-architecture space: lengths 1..3, heads {2,4}, mlp {8,16},
// dropout fixed at 0.1 (4 gene variants -> 4 + 16 + 64 chromosomes).
inline SearchSpace reduced_space() {
  evostack::FixedHyperparams fixed;
  fixed.hidden_dim = 8;
  fixed.embed_dim = 8;
  fixed.image_size = 16;
  fixed.patch_size = 8;
  fixed.channels = 1;
  return SearchSpace({2, 4}, {8, 16}, 0.1, 0.1, 1, 3, fixed);
}

// Brute-force enumeration of every legal chromosome, by recursive gene
// assignment.
inline std::vector<Chromosome> enumerate_space(const SearchSpace& space) {
  std::vector<LayerGene> gene_variants;
  for (int h : space.head_choices()) {
    for (int m : space.mlp_dim_choices()) {
      for (int d = 0; d < space.dropout_grid_size(); ++d) {
        LayerGene g;
        g.heads = h;
        g.mlp_dim = m;
        g.dropout = space.dropout_at(d);
        gene_variants.push_back(g);
      }
    }
  }

  std::vector<Chromosome> out;
  std::vector<Chromosome> frontier{Chromosome{}};
  for (int len = 1; len <= space.max_layers(); ++len) {
    std::vector<Chromosome> next;
    for (const auto& c : frontier) {
      for (const auto& g : gene_variants) {
        Chromosome grown = c;
        grown.layers.push_back(g);
        next.push_back(grown);
      }
    }
    for (const auto& c : next)
      if (c.length() >= space.min_layers()) out.push_back(c);
    frontier = std::move(next);
  }
  return out;
}

enum class EditKind { None, Insertion, Deletion, FieldChange, Other };

inline int gene_field_diff(const LayerGene& a, const LayerGene& b) {
  int d = 0;
  if (a.heads != b.heads) ++d;
  if (a.mlp_dim != b.mlp_dim) ++d;
  if (a.dropout != b.dropout) ++d;
  if (a.extra != b.extra) ++d;
  return d;
}

// Classifies the difference between two chromosomes as exactly one
// insertion, one deletion, one single-field change, or something else.
inline EditKind classify_edit(const Chromosome& before,
                              const Chromosome& after) {
  if (before == after) return EditKind::None;
  const int lb = before.length();
  const int la = after.length();
  if (la == lb + 1 || la == lb - 1) {
    const Chromosome& shorter = la < lb ? after : before;
    const Chromosome& longer = la < lb ? before : after;
    int matches = 0;
    for (int skip = 0; skip < longer.length(); ++skip) {
      Chromosome trimmed = longer;
      trimmed.layers.erase(trimmed.layers.begin() + skip);
      if (trimmed == shorter) ++matches;
    }
    if (matches > 0)
      return la > lb ? EditKind::Insertion : EditKind::Deletion;
    return EditKind::Other;
  }
  if (la == lb) {
    int changed_genes = 0;
    int changed_fields = 0;
    for (int i = 0; i < la; ++i) {
      const int d = gene_field_diff(before.layers[i], after.layers[i]);
      if (d > 0) {
        ++changed_genes;
        changed_fields = d;
      }
    }
    if (changed_genes == 1 && changed_fields == 1)
      return EditKind::FieldChange;
    return EditKind::Other;
  }
  return EditKind::Other;
}

// Multiset of genes as a sorted key list, for conservation checks.
inline std::map<std::string, int> gene_multiset(const Chromosome& a,
                                                const Chromosome& b) {
  std::map<std::string, int> out;
  for (const auto& g : a.layers)
    ++out[evostack::canonical_encode(Chromosome{{g}})];
  for (const auto& g : b.layers)
    ++out[evostack::canonical_encode(Chromosome{{g}})];
  return out;
}

}  // namespace testsupport
