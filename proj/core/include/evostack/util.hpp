#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace evostack {

// Bad arguments, broken invariants, malformed configuration. CLI maps this
// family to exit code 3.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem and serialization failures. CLI maps this family to exit code 4.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite loss or other numeric blowup during training, reported with the
// offending fold/epoch in the message.
struct TrainingDivergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept;

// Seeded random stream. The engine is mt19937_64; all value mappings
// (index, real, normal) are implemented here so draw sequences are pinned
// and do not depend on libstdc++ distribution internals. Streams derived
// via derive() depend only on the parent's construction seed, never on how
// many values the parent has produced.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, n). Rejection sampling, unbiased.
  std::uint64_t uniform_index(std::uint64_t n);

  // Uniform in [0, 1) with 53 random bits.
  double uniform01();

  double uniform_real(double lo, double hi);

  // Standard normal via Box-Muller; draws exactly two uniforms per call.
  double normal();

  bool bernoulli(double p) { return uniform01() < p; }

  RngStream derive(std::string_view tag) const {
    return RngStream(mix_seed(seed_, fnv1a64(tag)));
  }
  RngStream derive(std::uint64_t tag) const {
    return RngStream(mix_seed(seed_, tag));
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

// Runs fn(0..n-1) on up to `jobs` worker threads. jobs <= 1 degenerates to a
// plain loop. Exceptions are captured and the one thrown by the lowest index
// is rethrown, so failure reporting is schedule-independent.
void parallel_for(std::size_t n, unsigned jobs,
                  const std::function<void(std::size_t)>& fn);

}  // namespace evostack
