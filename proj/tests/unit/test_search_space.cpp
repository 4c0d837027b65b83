#include <doctest.h>

TEST_SUITE_BEGIN("search_space");

#include <set>
#include <unordered_set>

#include "evostack/search_space.hpp"
#include "oracles.hpp"

using namespace evostack;

namespace {

SearchSpace reference_space() {
  // The full-size configuration: layers 6..12, heads {8,16},
  // mlp {2048,3072,4096}, dropout 0.1..0.3.
  return SearchSpace({8, 16}, {2048, 3072, 4096}, 0.1, 0.3, 6, 12,
                     FixedHyperparams{});
}

Chromosome chrom(std::initializer_list<LayerGene> genes) {
  Chromosome c;
  c.layers = genes;
  return c;
}

}  // namespace

TEST_CASE("space construction validates invariants") {
  CHECK_THROWS_AS(SearchSpace({}, {2048}, 0.1, 0.3, 1, 3,
                              FixedHyperparams{}),
                  ValidationError);
  CHECK_THROWS_AS(SearchSpace({8}, {2048}, 0.3, 0.1, 1, 3,
                              FixedHyperparams{}),
                  ValidationError);
  CHECK_THROWS_AS(SearchSpace({8}, {2048}, 0.1, 0.3, 0, 3,
                              FixedHyperparams{}),
                  ValidationError);
  CHECK_THROWS_AS(SearchSpace({8}, {2048}, 0.1, 0.3, 4, 3,
                              FixedHyperparams{}),
                  ValidationError);
  // embed_dim 768 is not divisible by 7.
  CHECK_THROWS_AS(SearchSpace({7}, {2048}, 0.1, 0.3, 1, 3,
                              FixedHyperparams{}),
                  ValidationError);
  FixedHyperparams bad;
  bad.patch_size = 15;
  CHECK_THROWS_AS(SearchSpace({8}, {2048}, 0.1, 0.3, 1, 3, bad),
                  ValidationError);
}

TEST_CASE("random chromosomes stay inside the space") {
  const SearchSpace space = reference_space();
  RngStream rng(7);
  for (int i = 0; i < 10000; ++i) {
    const Chromosome c = random_chromosome(space, rng);
    CHECK(space.contains(c));
    CHECK(c.length() >= 6);
    CHECK(c.length() <= 12);
  }
}

TEST_CASE("singleton space yields the unique chromosome for any seed") {
  FixedHyperparams fixed;
  fixed.embed_dim = 8;
  fixed.hidden_dim = 8;
  fixed.image_size = 16;
  fixed.patch_size = 8;
  fixed.channels = 1;
  const SearchSpace space({2}, {8}, 0.1, 0.1, 3, 3, fixed);
  RngStream a(1), b(999);
  const Chromosome ca = random_chromosome(space, a);
  const Chromosome cb = random_chromosome(space, b);
  CHECK(ca == cb);
  CHECK(ca.length() == 3);
  CHECK(canonical_encode(ca) == "L3|h2,m8,d0.100|h2,m8,d0.100|h2,m8,d0.100");
}

TEST_CASE("10k draws cover all 84 reduced-space architectures") {
  const SearchSpace space = testsupport::reduced_space();
  const auto all = testsupport::enumerate_space(space);
  REQUIRE(all.size() == 84);  // 4 + 16 + 64

  std::unordered_set<std::string> seen;
  RngStream rng(42);
  for (int i = 0; i < 10000; ++i)
    seen.insert(canonical_encode(random_chromosome(space, rng)));
  CHECK(seen.size() == all.size());
}

TEST_CASE("canonical encoding matches the worked 3-layer example") {
  const Chromosome c = chrom({{8, 2048, 0.2, {}},
                              {8, 2048, 0.2, {}},
                              {16, 3072, 0.1, {}}});
  CHECK(canonical_encode(c) ==
        "L3|h8,m2048,d0.200|h8,m2048,d0.200|h16,m3072,d0.100");
}

TEST_CASE("declared-empty extras do not change the key") {
  const Chromosome plain = chrom({{8, 2048, 0.2, {}}});
  Chromosome with_empty = plain;
  with_empty.layers[0].extra.clear();
  CHECK(canonical_encode(plain) == canonical_encode(with_empty));
}

TEST_CASE("extras encode in lexicographic order with three decimals") {
  LayerGene g{8, 2048, 0.25, {{"zeta", 0.5}, {"alpha", 0.125}}};
  CHECK(canonical_encode(chrom({g})) ==
        "L1|h8,m2048,d0.250,alpha=0.125,zeta=0.500");
}

TEST_CASE("decode round-trips 1000 random chromosomes") {
  const SearchSpace space = reference_space();
  RngStream rng(3);
  for (int i = 0; i < 1000; ++i) {
    const Chromosome c = random_chromosome(space, rng);
    CHECK(canonical_decode(canonical_encode(c)) == c);
  }
}

TEST_CASE("decode rejects malformed keys") {
  CHECK_THROWS_AS(canonical_decode("X3|h8,m2048,d0.200"), ValidationError);
  CHECK_THROWS_AS(canonical_decode("L1|h8,m2048"), ValidationError);
  CHECK_THROWS_AS(canonical_decode("L1|h8,m2048,d0.2"), ValidationError);
  CHECK_THROWS_AS(canonical_decode("L2|h8,m2048,d0.200"), ValidationError);
  CHECK_THROWS_AS(canonical_decode("L1|h8,m2048,d0.200junk"),
                  ValidationError);
}

TEST_CASE("encoding is injective over the 84-architecture space") {
  const auto all = testsupport::enumerate_space(testsupport::reduced_space());
  std::set<std::string> keys;
  for (const auto& c : all) keys.insert(canonical_encode(c));
  CHECK(keys.size() == all.size());
}

TEST_CASE("length distribution is uniform over the reduced space") {
  const SearchSpace space = testsupport::reduced_space();
  RngStream rng(11);
  int counts[4] = {0, 0, 0, 0};
  const int trials = 100000;
  for (int i = 0; i < trials; ++i)
    ++counts[random_chromosome(space, rng).length()];
  for (int len = 1; len <= 3; ++len) {
    const double freq = static_cast<double>(counts[len]) / trials;
    CHECK(freq == doctest::Approx(1.0 / 3.0).epsilon(0.06));  // 1/3 +- 0.02
  }
}

TEST_CASE("architecture JSON round-trips") {
  const SearchSpace space = reference_space();
  RngStream rng(5);
  const Chromosome c = random_chromosome(space, rng);
  const std::string json = architecture_to_json(c, space.fixed());
  const auto [c2, fixed2] = architecture_from_json(json);
  CHECK(c2 == c);
  CHECK(fixed2.embed_dim == space.fixed().embed_dim);
  CHECK(fixed2.patch_size == space.fixed().patch_size);
}

TEST_SUITE_END();
