#include <doctest.h>

TEST_SUITE_BEGIN("genetic_ops");

#include <map>

#include "evostack/genetic_ops.hpp"
#include "oracles.hpp"

using namespace evostack;
using testsupport::EditKind;

namespace {

Individual ind(Chromosome c, double fitness) {
  return Individual{std::move(c), fitness};
}

Chromosome chrom(std::initializer_list<LayerGene> genes) {
  Chromosome c;
  c.layers = genes;
  return c;
}

// Non-degenerate space: every field has at least two values.
SearchSpace wide_space() {
  FixedHyperparams fixed;
  fixed.hidden_dim = 8;
  fixed.embed_dim = 8;
  fixed.image_size = 16;
  fixed.patch_size = 8;
  fixed.channels = 1;
  return SearchSpace({2, 4}, {8, 16}, 0.1, 0.3, 1, 5, fixed);
}

}  // namespace

TEST_CASE("full-population tournament returns the maximum") {
  const SearchSpace space = testsupport::reduced_space();
  RngStream rng(1);
  std::vector<Individual> pop{
      ind(random_chromosome(space, rng), 0.9),
      ind(random_chromosome(space, rng), 0.1),
  };
  OperatorConfig cfg;
  for (int i = 0; i < 100; ++i)
    CHECK(tournament_select(pop, cfg, rng).fitness == 0.9);
}

TEST_CASE("tournament requires fitness everywhere") {
  const SearchSpace space = testsupport::reduced_space();
  RngStream rng(1);
  std::vector<Individual> pop{
      ind(random_chromosome(space, rng), 0.9),
      {random_chromosome(space, rng), std::nullopt},
  };
  OperatorConfig cfg;
  CHECK_THROWS_AS(tournament_select(pop, cfg, rng), ValidationError);
}

TEST_CASE("equal fitness selects uniformly via first-drawn index") {
  const SearchSpace space = testsupport::reduced_space();
  RngStream rng(2);
  std::vector<Individual> pop;
  for (int i = 0; i < 4; ++i)
    pop.push_back(ind(random_chromosome(space, rng), 0.5));
  OperatorConfig cfg;

  std::map<std::string, int> wins;
  const int trials = 100000;
  for (int t = 0; t < trials; ++t) {
    const Individual& w = tournament_select(pop, cfg, rng);
    ++wins[canonical_encode(w.chromosome) + "#" +
           std::to_string(&w - pop.data())];
  }
  for (const auto& [key, count] : wins) {
    const double freq = static_cast<double>(count) / trials;
    CHECK(freq == doctest::Approx(0.25).epsilon(0.08));  // 25% +- 2%
  }
  CHECK(wins.size() == 4);
}

TEST_CASE("tournament selection probabilities match enumeration") {
  // fitness (0.8, 0.5, 0.2), size 2: every unordered pair is equally
  // likely and the larger fitness wins, so P = (2/3, 1/3, 0).
  const SearchSpace space = testsupport::reduced_space();
  RngStream rng(3);
  std::vector<Individual> pop{
      ind(random_chromosome(space, rng), 0.8),
      ind(random_chromosome(space, rng), 0.5),
      ind(random_chromosome(space, rng), 0.2),
  };
  OperatorConfig cfg;
  int counts[3] = {0, 0, 0};
  const int trials = 100000;
  for (int t = 0; t < trials; ++t) {
    const Individual& w = tournament_select(pop, cfg, rng);
    ++counts[&w - pop.data()];
  }
  CHECK(static_cast<double>(counts[0]) / trials ==
        doctest::Approx(2.0 / 3.0).epsilon(0.02));
  CHECK(static_cast<double>(counts[1]) / trials ==
        doctest::Approx(1.0 / 3.0).epsilon(0.04));
  CHECK(counts[2] == 0);
}

TEST_CASE("crossover reproduces the worked 3-layer recombination") {
  FixedHyperparams fixed;  // embed 768 divides 8 and 16
  const SearchSpace space({8, 16}, {2048, 3072, 4096}, 0.1, 0.3, 3, 3,
                          fixed);
  const Chromosome p1 = chrom(
      {{8, 2048, 0.2, {}}, {8, 2048, 0.2, {}}, {16, 3072, 0.1, {}}});
  const Chromosome p2 = chrom(
      {{16, 4096, 0.1, {}}, {16, 3072, 0.2, {}}, {16, 3072, 0.1, {}}});
  // Cut (1,1) splices the tails; cut (2,2) happens to reproduce the
  // parents because the third genes agree.
  const Chromosome want1 = chrom(
      {{8, 2048, 0.2, {}}, {16, 3072, 0.2, {}}, {16, 3072, 0.1, {}}});
  const Chromosome want2 = chrom(
      {{16, 4096, 0.1, {}}, {8, 2048, 0.2, {}}, {16, 3072, 0.1, {}}});

  bool saw_spliced = false;
  bool saw_parents = false;
  for (std::uint64_t seed = 0; seed < 64; ++seed) {
    RngStream rng(seed);
    const auto [c1, c2] = single_point_crossover(p1, p2, space, rng);
    if (c1 == want1 && c2 == want2)
      saw_spliced = true;
    else if (c1 == p1 && c2 == p2)
      saw_parents = true;
    else
      FAIL("unexpected crossover outcome");
  }
  CHECK(saw_spliced);
  CHECK(saw_parents);
}

TEST_CASE("identical parents reproduce themselves under pinned lengths") {
  // A fixed-length range forces k1 == k2, so every feasible cut maps a
  // parent pair (p, p) back to itself.
  FixedHyperparams fixed;
  fixed.hidden_dim = 8;
  fixed.embed_dim = 8;
  fixed.image_size = 16;
  fixed.patch_size = 8;
  fixed.channels = 1;
  const SearchSpace space({2, 4}, {8, 16}, 0.1, 0.3, 4, 4, fixed);
  RngStream rng(4);
  for (int i = 0; i < 200; ++i) {
    const Chromosome p = random_chromosome(space, rng);
    const auto [c1, c2] = single_point_crossover(p, p, space, rng);
    CHECK(c1 == p);
    CHECK(c2 == p);
  }
}

TEST_CASE("identical parents conserve genes under variable lengths") {
  const SearchSpace space = wide_space();
  RngStream rng(40);
  for (int i = 0; i < 200; ++i) {
    const Chromosome p = random_chromosome(space, rng);
    const auto [c1, c2] = single_point_crossover(p, p, space, rng);
    CHECK(testsupport::gene_multiset(p, p) ==
          testsupport::gene_multiset(c1, c2));
  }
}

TEST_CASE("length-1 parents fall back to copies") {
  const SearchSpace space = wide_space();
  RngStream rng(5);
  Chromosome p1 = random_chromosome(space, rng);
  p1.layers.resize(1);
  const Chromosome p2 = random_chromosome(space, rng);
  const auto [c1, c2] = single_point_crossover(p1, p2, space, rng);
  CHECK(c1 == p1);
  CHECK(c2 == p2);
}

TEST_CASE("crossover conserves the gene multiset and stays in space") {
  const SearchSpace space = wide_space();
  RngStream rng(6);
  for (int i = 0; i < 10000; ++i) {
    const Chromosome p1 = random_chromosome(space, rng);
    const Chromosome p2 = random_chromosome(space, rng);
    const auto [c1, c2] = single_point_crossover(p1, p2, space, rng);
    CHECK(space.contains(c1));
    CHECK(space.contains(c2));
    CHECK(testsupport::gene_multiset(p1, p2) ==
          testsupport::gene_multiset(c1, c2));
  }
}

TEST_CASE("mutation at the length bounds falls through to modify") {
  const SearchSpace space = wide_space();
  RngStream rng(7);
  OperatorConfig add_only;
  add_only.mutation_type_probs = {1.0, 0.0, 0.0};
  OperatorConfig remove_only;
  remove_only.mutation_type_probs = {0.0, 1.0, 0.0};

  Chromosome at_max = random_chromosome(space, rng);
  while (at_max.length() < space.max_layers())
    at_max.layers.push_back(at_max.layers.front());
  for (int i = 0; i < 100; ++i) {
    const Chromosome m = mutate(at_max, space, add_only, rng);
    CHECK(m.length() == at_max.length());
    CHECK(testsupport::classify_edit(at_max, m) == EditKind::FieldChange);
  }

  Chromosome at_min = random_chromosome(space, rng);
  at_min.layers.resize(space.min_layers());
  for (int i = 0; i < 100; ++i) {
    const Chromosome m = mutate(at_min, space, remove_only, rng);
    CHECK(m.length() == at_min.length());
    CHECK(testsupport::classify_edit(at_min, m) == EditKind::FieldChange);
  }
}

TEST_CASE("mutation edit-type frequencies are 0.70/0.20/0.10") {
  const SearchSpace space = wide_space();
  RngStream rng(8);
  Chromosome mid = random_chromosome(space, rng);
  mid.layers.resize(3);
  OperatorConfig cfg;

  int add = 0, remove = 0, modify = 0;
  const int trials = 100000;
  for (int t = 0; t < trials; ++t) {
    const Chromosome m = mutate(mid, space, cfg, rng);
    switch (testsupport::classify_edit(mid, m)) {
      case EditKind::Insertion: ++add; break;
      case EditKind::Deletion: ++remove; break;
      case EditKind::FieldChange: ++modify; break;
      default: FAIL("mutation produced a non-single edit");
    }
  }
  CHECK(static_cast<double>(add) / trials ==
        doctest::Approx(0.70).epsilon(0.015));
  CHECK(static_cast<double>(remove) / trials ==
        doctest::Approx(0.20).epsilon(0.05));
  CHECK(static_cast<double>(modify) / trials ==
        doctest::Approx(0.10).epsilon(0.10));
}

TEST_CASE("mutation closure over 10k applications") {
  const SearchSpace space = wide_space();
  RngStream rng(9);
  OperatorConfig cfg;
  Chromosome c = random_chromosome(space, rng);
  for (int i = 0; i < 10000; ++i) {
    c = mutate(c, space, cfg, rng);
    CHECK(space.contains(c));
  }
}

TEST_CASE("roulette never selects zero-mass individuals") {
  const SearchSpace space = testsupport::reduced_space();
  RngStream rng(10);
  std::vector<Individual> pool{
      ind(random_chromosome(space, rng), 1.0),
      ind(random_chromosome(space, rng), 0.0),
  };
  const auto picks = roulette_select(pool, 10000, rng);
  for (const auto& p : picks) CHECK(p.fitness == 1.0);
}

TEST_CASE("roulette with all-zero fitness is uniform") {
  const SearchSpace space = wide_space();
  RngStream rng(11);
  std::vector<Individual> pool;
  std::map<std::string, int> slot_of;
  while (pool.size() < 5) {
    Chromosome c = random_chromosome(space, rng);
    const std::string key = canonical_encode(c);
    if (slot_of.contains(key)) continue;
    slot_of[key] = static_cast<int>(pool.size());
    pool.push_back(ind(std::move(c), 0.0));
  }
  const int trials = 100000;
  const auto picks = roulette_select(pool, trials, rng);
  int counts[5] = {0, 0, 0, 0, 0};
  for (const auto& p : picks)
    ++counts[slot_of.at(canonical_encode(p.chromosome))];
  for (int c : counts)
    CHECK(static_cast<double>(c) / trials ==
          doctest::Approx(0.2).epsilon(0.05));  // 1/5 +- 1%
}

TEST_CASE("roulette frequencies match analytic normalization") {
  // fitness (0.72, 0.24) -> probabilities (0.75, 0.25).
  const SearchSpace space = wide_space();
  RngStream rng(12);
  Chromosome a = random_chromosome(space, rng);
  Chromosome b = random_chromosome(space, rng);
  while (canonical_encode(b) == canonical_encode(a))
    b = random_chromosome(space, rng);
  std::vector<Individual> pool{ind(a, 0.72), ind(b, 0.24)};
  const int trials = 100000;
  const auto picks = roulette_select(pool, trials, rng);
  int first = 0;
  const std::string key_a = canonical_encode(a);
  for (const auto& p : picks)
    if (canonical_encode(p.chromosome) == key_a) ++first;
  CHECK(static_cast<double>(first) / trials ==
        doctest::Approx(0.75).epsilon(0.013));
}

TEST_CASE("elitism is idempotent when the best is present") {
  const SearchSpace space = testsupport::reduced_space();
  RngStream rng(13);
  std::vector<Individual> gen;
  for (int i = 0; i < 4; ++i)
    gen.push_back(ind(random_chromosome(space, rng), 0.1 * (i + 1)));
  const Individual best = gen[3];
  const auto out = apply_elitism(gen, best);
  REQUIRE(out.size() == gen.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    CHECK(out[i].chromosome == gen[i].chromosome);
}

TEST_CASE("elitism replaces exactly one worst individual") {
  const SearchSpace space = wide_space();
  RngStream rng(14);
  std::vector<Individual> gen;
  for (int i = 0; i < 4; ++i)
    gen.push_back(ind(random_chromosome(space, rng), 0.2 + 0.1 * i));
  Individual best = ind(random_chromosome(space, rng), 0.99);
  while (canonical_encode(best.chromosome) ==
         canonical_encode(gen[0].chromosome))
    best.chromosome = random_chromosome(space, rng);

  const auto out = apply_elitism(gen, best);
  REQUIRE(out.size() == gen.size());
  int replaced = 0;
  double max_fit = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(out[i].chromosome == gen[i].chromosome)) ++replaced;
    max_fit = std::max(max_fit, out[i].fitness.value());
  }
  CHECK(replaced == 1);
  CHECK(max_fit == 0.99);
  // The slot replaced was the minimum-fitness one.
  CHECK(out[0].fitness == 0.99);
}

TEST_CASE("elitism guarantees max fitness at least best") {
  const SearchSpace space = wide_space();
  RngStream rng(15);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Individual> gen;
    for (int i = 0; i < 5; ++i)
      gen.push_back(ind(random_chromosome(space, rng),
                        rng.uniform01() * 0.5));
    const Individual best = ind(random_chromosome(space, rng),
                                0.5 + rng.uniform01() * 0.5);
    const auto out = apply_elitism(gen, best);
    double max_fit = 0.0;
    for (const auto& o : out) max_fit = std::max(max_fit, *o.fitness);
    CHECK(max_fit >= best.fitness.value());
  }
}

TEST_SUITE_END();
