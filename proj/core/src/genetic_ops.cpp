#include "evostack/genetic_ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace evostack {

void OperatorConfig::validate() const {
  auto is_prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!is_prob(p_cross)) throw ValidationError("p_cross must be in [0,1]");
  if (!is_prob(p_mutate)) throw ValidationError("p_mutate must be in [0,1]");
  double sum = 0.0;
  for (double p : mutation_type_probs) {
    if (!is_prob(p))
      throw ValidationError("mutation type probabilities must be in [0,1]");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw ValidationError("mutation_type_probs must sum to 1");
  if (tournament_size < 2)
    throw ValidationError("tournament_size must be >= 2");
}

namespace {

double fitness_of(const Individual& ind) {
  if (!ind.fitness)
    throw ValidationError("individual " + canonical_encode(ind.chromosome) +
                          " has no fitness");
  return *ind.fitness;
}

}  // namespace

const Individual& tournament_select(std::span<const Individual> population,
                                    const OperatorConfig& cfg,
                                    RngStream& rng) {
  const std::size_t n = population.size();
  if (n == 0) throw ValidationError("tournament over an empty population");
  const std::size_t t = static_cast<std::size_t>(cfg.tournament_size);
  if (t > n)
    throw ValidationError("tournament_size exceeds population size");

  // Partial Fisher-Yates: the first t entries are a uniform sample without
  // replacement. Ties keep the earlier-drawn candidate, so an all-equal
  // population selects uniformly.
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::size_t best = n;
  double best_fit = -1.0;
  for (std::size_t i = 0; i < t; ++i) {
    const std::size_t j = i + rng.uniform_index(n - i);
    std::swap(idx[i], idx[j]);
    const double f = fitness_of(population[idx[i]]);
    if (f > best_fit) {
      best_fit = f;
      best = idx[i];
    }
  }
  return population[best];
}

std::pair<Chromosome, Chromosome> single_point_crossover(
    const Chromosome& p1, const Chromosome& p2, const SearchSpace& space,
    RngStream& rng) {
  space.require(p1);
  space.require(p2);
  const int len1 = p1.length();
  const int len2 = p2.length();

  std::vector<std::pair<int, int>> feasible;
  for (int k1 = 1; k1 < len1; ++k1) {
    for (int k2 = 1; k2 < len2; ++k2) {
      const int c1_len = k1 + len2 - k2;
      const int c2_len = k2 + len1 - k1;
      if (c1_len >= space.min_layers() && c1_len <= space.max_layers() &&
          c2_len >= space.min_layers() && c2_len <= space.max_layers())
        feasible.emplace_back(k1, k2);
    }
  }
  if (feasible.empty()) return {p1, p2};

  const auto [k1, k2] = feasible[rng.uniform_index(feasible.size())];
  Chromosome c1, c2;
  c1.layers.assign(p1.layers.begin(), p1.layers.begin() + k1);
  c1.layers.insert(c1.layers.end(), p2.layers.begin() + k2, p2.layers.end());
  c2.layers.assign(p2.layers.begin(), p2.layers.begin() + k2);
  c2.layers.insert(c2.layers.end(), p1.layers.begin() + k1, p1.layers.end());
  return {std::move(c1), std::move(c2)};
}

namespace {

enum class EditKind { Add, Remove, Modify };

// Resample one field until it changes, capped at 16 attempts; a singleton
// domain keeps the old value.
void modify_one_field(LayerGene& gene, const SearchSpace& space,
                      RngStream& rng) {
  const std::size_t field_count = 3 + space.extra_dims().size();
  const std::size_t field = rng.uniform_index(field_count);
  for (int attempt = 0; attempt < 16; ++attempt) {
    switch (field) {
      case 0: {
        const int pick = space.head_choices()[rng.uniform_index(
            space.head_choices().size())];
        if (pick != gene.heads) {
          gene.heads = pick;
          return;
        }
        break;
      }
      case 1: {
        const int pick = space.mlp_dim_choices()[rng.uniform_index(
            space.mlp_dim_choices().size())];
        if (pick != gene.mlp_dim) {
          gene.mlp_dim = pick;
          return;
        }
        break;
      }
      case 2: {
        const double pick = space.dropout_at(
            static_cast<int>(rng.uniform_index(space.dropout_grid_size())));
        if (pick != gene.dropout) {
          gene.dropout = pick;
          return;
        }
        break;
      }
      default: {
        const auto& dim = space.extra_dims()[field - 3];
        const long long lo = std::llround(dim.low * 1000.0);
        const long long hi = std::llround(dim.high * 1000.0);
        const long long step = std::llround(dim.step * 1000.0);
        const long long count = (hi - lo) / step + 1;
        const double pick =
            static_cast<double>(lo + step * static_cast<long long>(
                                              rng.uniform_index(count))) /
            1000.0;
        if (pick != gene.extra[dim.key]) {
          gene.extra[dim.key] = pick;
          return;
        }
        break;
      }
    }
  }
}

}  // namespace

Chromosome mutate(const Chromosome& c, const SearchSpace& space,
                  const OperatorConfig& cfg, RngStream& rng) {
  space.require(c);
  const double u = rng.uniform01();
  EditKind kind;
  if (u < cfg.mutation_type_probs[0])
    kind = EditKind::Add;
  else if (u < cfg.mutation_type_probs[0] + cfg.mutation_type_probs[1])
    kind = EditKind::Remove;
  else
    kind = EditKind::Modify;

  if (kind == EditKind::Add && c.length() >= space.max_layers())
    kind = EditKind::Modify;
  if (kind == EditKind::Remove && c.length() <= space.min_layers())
    kind = EditKind::Modify;

  Chromosome out = c;
  switch (kind) {
    case EditKind::Add: {
      const std::size_t pos = rng.uniform_index(out.layers.size() + 1);
      out.layers.insert(out.layers.begin() + pos, random_gene(space, rng));
      break;
    }
    case EditKind::Remove: {
      const std::size_t pos = rng.uniform_index(out.layers.size());
      out.layers.erase(out.layers.begin() + pos);
      break;
    }
    case EditKind::Modify: {
      const std::size_t pos = rng.uniform_index(out.layers.size());
      modify_one_field(out.layers[pos], space, rng);
      break;
    }
  }
  return out;
}

std::vector<Individual> roulette_select(std::span<const Individual> pool,
                                        int n, RngStream& rng) {
  if (pool.empty()) throw ValidationError("roulette over an empty pool");
  if (n < 1) throw ValidationError("roulette draw count must be >= 1");

  std::vector<double> cumulative(pool.size());
  double total = 0.0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const double f = fitness_of(pool[i]);
    if (f < 0.0)
      throw ValidationError("roulette requires non-negative fitness");
    total += f;
    cumulative[i] = total;
  }

  std::vector<Individual> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int draw = 0; draw < n; ++draw) {
    std::size_t pick;
    if (total <= 0.0) {
      pick = rng.uniform_index(pool.size());
    } else {
      const double x = rng.uniform01() * total;
      pick = static_cast<std::size_t>(
          std::lower_bound(cumulative.begin(), cumulative.end(), x) -
          cumulative.begin());
      if (pick >= pool.size()) pick = pool.size() - 1;
    }
    out.push_back(pool[pick]);
  }
  return out;
}

std::vector<Individual> apply_elitism(std::vector<Individual> next_gen,
                                      const Individual& best) {
  if (next_gen.empty()) throw ValidationError("elitism over empty generation");
  if (!best.fitness) throw ValidationError("elite individual has no fitness");

  const std::string best_key = canonical_encode(best.chromosome);
  for (const auto& ind : next_gen)
    if (canonical_encode(ind.chromosome) == best_key) return next_gen;

  std::size_t worst = 0;
  double worst_fit = fitness_of(next_gen[0]);
  for (std::size_t i = 1; i < next_gen.size(); ++i) {
    const double f = fitness_of(next_gen[i]);
    if (f <= worst_fit) {
      worst_fit = f;
      worst = i;
    }
  }
  next_gen[worst] = best;
  return next_gen;
}

}  // namespace evostack
