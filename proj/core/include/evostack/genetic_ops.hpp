#pragma once

#include <array>
#include <span>
#include <utility>
#include <vector>

#include "evostack/search_space.hpp"
#include "evostack/util.hpp"

namespace evostack {

struct OperatorConfig {
  double p_cross = 0.8;
  double p_mutate = 0.2;
  // add, remove, modify
  std::array<double, 3> mutation_type_probs{0.7, 0.2, 0.1};
  int tournament_size = 2;

  void validate() const;
};

// Best-of-k selection: tournament_size uniform draws without replacement,
// highest fitness wins, ties broken by earlier population index.
const Individual& tournament_select(std::span<const Individual> population,
                                    const OperatorConfig& cfg, RngStream& rng);

// Single-point crossover over variable-length parents. Cut pairs (k1, k2)
// are drawn uniformly from those whose two offspring lengths both stay in
// the space's layer range; when no pair is feasible (any length-1 parent
// included) the parents are returned unchanged.
std::pair<Chromosome, Chromosome> single_point_crossover(
    const Chromosome& p1, const Chromosome& p2, const SearchSpace& space,
    RngStream& rng);

// One edit drawn from mutation_type_probs. ADD at max length and REMOVE at
// min length both fall through to MODIFY, so an edit always applies.
Chromosome mutate(const Chromosome& c, const SearchSpace& space,
                  const OperatorConfig& cfg, RngStream& rng);

// Fitness-proportional sampling with replacement; an all-zero pool falls
// back to uniform.
std::vector<Individual> roulette_select(std::span<const Individual> pool,
                                        int n, RngStream& rng);

// Guarantees `best` survives: if its canonical key is absent from next_gen,
// the minimum-fitness individual (ties: highest index) is replaced.
std::vector<Individual> apply_elitism(std::vector<Individual> next_gen,
                                      const Individual& best);

}  // namespace evostack
