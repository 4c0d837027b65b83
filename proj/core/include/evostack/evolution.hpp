#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "evostack/fitness.hpp"
#include "evostack/genetic_ops.hpp"
#include "evostack/search_space.hpp"

namespace evostack {

struct EvolutionConfig {
  int max_gens = 20;
  int pop_size = 6;
  OperatorConfig operators;
  std::uint64_t seed = 0;
  int parallel_evaluations = 1;

  // pop_size may be odd (offspring pairs are generated by ceil(pop/2) and
  // truncated), matching the reference setting of 5.
  void validate() const;
};

// Canonical-key -> fitness memo shared across a run. Thread-safe; hits and
// misses count lookup() calls exactly.
class FitnessCache {
 public:
  FitnessCache() = default;
  explicit FitnessCache(std::map<std::string, double> entries)
      : entries_(std::move(entries)) {}

  std::optional<double> lookup(const std::string& key);
  void store(const std::string& key, double fitness);

  std::uint64_t hits() const;
  std::uint64_t misses() const;
  std::size_t size() const;
  std::map<std::string, double> snapshot() const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, double> entries_;
  std::uint64_t hits_ = 0;
  std::uint64_t misses_ = 0;
};

struct GenerationRecord {
  int generation = 0;        // 0 is the initial population
  double best_fitness = 0.0;  // best ever evaluated so far
  double mean_fitness = 0.0;  // mean over the current population
  std::uint64_t evaluations_run = 0;  // evaluator invocations this step
  std::uint64_t cache_hits = 0;       // cache hits this step
  std::string best_key;
};

struct EvalOutcome {
  std::vector<Individual> population;
  std::uint64_t evaluations_run = 0;
  std::uint64_t cache_hits = 0;
};

// Assigns fitness to every individual, consulting the cache first by
// canonical key. Duplicate chromosomes (within the batch or across calls)
// cost one evaluator invocation total; misses evaluate on up to `jobs`
// workers. Evaluator failures abort with the offending key in the message.
EvalOutcome evaluate_population(std::vector<Individual> pop,
                                const FitnessEvaluator& evaluator,
                                FitnessCache& cache, int jobs = 1);

struct EvolveResult {
  Individual best;
  std::vector<GenerationRecord> history;
  std::map<std::string, double> cache_entries;
  std::uint64_t cache_hits = 0;
  std::uint64_t cache_misses = 0;
};

// The full generational loop: random init, tournament parent selection,
// probabilistic single-point crossover, gated mutation of both children,
// offspring evaluation, roulette environmental selection over parents plus
// offspring, elitism repair. Deterministic given (cfg.seed, evaluator),
// including with parallel evaluation.
EvolveResult evolve(const EvolutionConfig& cfg, const SearchSpace& space,
                    const FitnessEvaluator& evaluator,
                    const std::map<std::string, double>* preload_cache =
                        nullptr);

// Run directory: history.jsonl, best.arch.json, cache.json,
// config.snapshot.json. Refuses to reuse an existing directory unless
// `overwrite`.
void write_run_dir(const std::filesystem::path& dir,
                   const EvolveResult& result, const EvolutionConfig& cfg,
                   const SearchSpace& space, const FitnessEvaluator& evaluator,
                   bool overwrite);

std::string history_to_jsonl(const std::vector<GenerationRecord>& history);
std::map<std::string, double> load_cache_file(
    const std::filesystem::path& path);

}  // namespace evostack
