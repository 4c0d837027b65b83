#include "evostack/evolution.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "evostack/util.hpp"

namespace evostack {

void EvolutionConfig::validate() const {
  if (max_gens < 1) throw ValidationError("max_gens must be >= 1");
  if (pop_size < 2) throw ValidationError("pop_size must be >= 2");
  if (parallel_evaluations < 1)
    throw ValidationError("parallel_evaluations must be >= 1");
  operators.validate();
  if (operators.tournament_size > pop_size)
    throw ValidationError("tournament_size exceeds pop_size");
}

std::optional<double> FitnessCache::lookup(const std::string& key) {
  std::lock_guard lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    ++misses_;
    return std::nullopt;
  }
  ++hits_;
  return it->second;
}

void FitnessCache::store(const std::string& key, double fitness) {
  if (fitness < 0.0 || fitness > 1.0 || !std::isfinite(fitness))
    throw ValidationError("fitness for " + key + " outside [0,1]: " +
                          std::to_string(fitness));
  std::lock_guard lock(mu_);
  entries_[key] = fitness;
}

std::uint64_t FitnessCache::hits() const {
  std::lock_guard lock(mu_);
  return hits_;
}

std::uint64_t FitnessCache::misses() const {
  std::lock_guard lock(mu_);
  return misses_;
}

std::size_t FitnessCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

std::map<std::string, double> FitnessCache::snapshot() const {
  std::lock_guard lock(mu_);
  return entries_;
}

EvalOutcome evaluate_population(std::vector<Individual> pop,
                                const FitnessEvaluator& evaluator,
                                FitnessCache& cache, int jobs) {
  const std::uint64_t hits_before = cache.hits();
  std::vector<std::string> keys(pop.size());
  for (std::size_t i = 0; i < pop.size(); ++i)
    keys[i] = canonical_encode(pop[i].chromosome);

  // First pass: probe the cache once per distinct key, in population order.
  std::vector<std::string> to_eval;
  std::unordered_map<std::string, std::size_t> first_occurrence;
  std::vector<bool> resolved(pop.size(), false);
  for (std::size_t i = 0; i < pop.size(); ++i) {
    if (first_occurrence.contains(keys[i])) continue;  // settled below
    if (auto v = cache.lookup(keys[i])) {
      pop[i].fitness = *v;
      resolved[i] = true;
      continue;
    }
    first_occurrence.emplace(keys[i], i);
    to_eval.push_back(keys[i]);
  }

  std::vector<double> results(to_eval.size());
  parallel_for(to_eval.size(), static_cast<unsigned>(jobs),
               [&](std::size_t i) {
                 const std::size_t item = first_occurrence.at(to_eval[i]);
                 try {
                   results[i] = evaluator.evaluate(pop[item].chromosome);
                 } catch (const std::exception& e) {
                   throw IoError("fitness evaluation failed for " +
                                 to_eval[i] + ": " + e.what());
                 }
               });
  std::unordered_map<std::string, double> fresh;
  for (std::size_t i = 0; i < to_eval.size(); ++i) {
    cache.store(to_eval[i], results[i]);
    fresh.emplace(to_eval[i], results[i]);
  }

  // Second pass: first occurrences already paid their (missed) lookup;
  // batch duplicates read back through the cache so the counters see one
  // lookup per individual.
  for (std::size_t i = 0; i < pop.size(); ++i) {
    if (resolved[i]) continue;
    auto fo = first_occurrence.find(keys[i]);
    if (fo != first_occurrence.end() && fo->second == i)
      pop[i].fitness = fresh.at(keys[i]);
    else
      pop[i].fitness = *cache.lookup(keys[i]);
  }

  EvalOutcome out;
  out.evaluations_run = to_eval.size();
  out.cache_hits = cache.hits() - hits_before;
  out.population = std::move(pop);
  return out;
}

namespace {

double mean_fitness(const std::vector<Individual>& pop) {
  double sum = 0.0;
  for (const auto& ind : pop) sum += ind.fitness.value();
  return sum / static_cast<double>(pop.size());
}

// Highest fitness wins; equal fitness prefers the lexicographically
// smaller canonical key so the choice is deterministic.
const Individual& best_of(const std::vector<Individual>& pop) {
  const Individual* best = &pop.front();
  std::string best_key = canonical_encode(best->chromosome);
  for (const auto& ind : pop) {
    const double f = ind.fitness.value();
    if (f > best->fitness.value()) {
      best = &ind;
      best_key = canonical_encode(ind.chromosome);
    } else if (f == best->fitness.value()) {
      std::string key = canonical_encode(ind.chromosome);
      if (key < best_key) {
        best = &ind;
        best_key = std::move(key);
      }
    }
  }
  return *best;
}

}  // namespace

EvolveResult evolve(const EvolutionConfig& cfg, const SearchSpace& space,
                    const FitnessEvaluator& evaluator,
                    const std::map<std::string, double>* preload_cache) {
  cfg.validate();

  FitnessCache cache = preload_cache ? FitnessCache(*preload_cache)
                                     : FitnessCache();
  RngStream rng(cfg.seed);

  std::vector<Individual> pop;
  pop.reserve(cfg.pop_size);
  for (int i = 0; i < cfg.pop_size; ++i)
    pop.push_back({random_chromosome(space, rng), std::nullopt});

  EvolveResult result;
  auto init = evaluate_population(std::move(pop), evaluator, cache,
                                  cfg.parallel_evaluations);
  pop = std::move(init.population);

  Individual best_ever = best_of(pop);
  result.history.push_back({0, best_ever.fitness.value(), mean_fitness(pop),
                            init.evaluations_run, init.cache_hits,
                            canonical_encode(best_ever.chromosome)});

  const int pairs = (cfg.pop_size + 1) / 2;
  for (int gen = 1; gen <= cfg.max_gens; ++gen) {
    std::vector<Individual> offspring;
    offspring.reserve(pairs * 2);
    for (int i = 0; i < pairs; ++i) {
      const Individual& p1 = tournament_select(pop, cfg.operators, rng);
      const Individual& p2 = tournament_select(pop, cfg.operators, rng);
      Chromosome c1 = p1.chromosome;
      Chromosome c2 = p2.chromosome;
      if (rng.bernoulli(cfg.operators.p_cross))
        std::tie(c1, c2) = single_point_crossover(c1, c2, space, rng);
      if (rng.bernoulli(cfg.operators.p_mutate)) {
        c1 = mutate(c1, space, cfg.operators, rng);
        c2 = mutate(c2, space, cfg.operators, rng);
      }
      offspring.push_back({std::move(c1), std::nullopt});
      offspring.push_back({std::move(c2), std::nullopt});
    }
    if (static_cast<int>(offspring.size()) > cfg.pop_size)
      offspring.resize(cfg.pop_size);  // odd pop_size

    auto eval = evaluate_population(std::move(offspring), evaluator, cache,
                                    cfg.parallel_evaluations);

    std::vector<Individual> combined = pop;
    combined.insert(combined.end(), eval.population.begin(),
                    eval.population.end());
    const Individual gen_best = best_of(combined);
    if (gen_best.fitness.value() > best_ever.fitness.value() ||
        (gen_best.fitness.value() == best_ever.fitness.value() &&
         canonical_encode(gen_best.chromosome) <
             canonical_encode(best_ever.chromosome)))
      best_ever = gen_best;

    pop = apply_elitism(roulette_select(combined, cfg.pop_size, rng),
                        gen_best);

    result.history.push_back({gen, best_ever.fitness.value(),
                              mean_fitness(pop), eval.evaluations_run,
                              eval.cache_hits,
                              canonical_encode(best_ever.chromosome)});
  }

  result.best = best_ever;
  result.cache_entries = cache.snapshot();
  result.cache_hits = cache.hits();
  result.cache_misses = cache.misses();
  return result;
}

namespace {

nlohmann::ordered_json record_to_json(const GenerationRecord& r) {
  nlohmann::ordered_json j;
  j["generation"] = r.generation;
  j["best_fitness"] = r.best_fitness;
  j["mean_fitness"] = r.mean_fitness;
  j["evaluations_run"] = r.evaluations_run;
  j["cache_hits"] = r.cache_hits;
  j["best_key"] = r.best_key;
  return j;
}

}  // namespace

std::string history_to_jsonl(const std::vector<GenerationRecord>& history) {
  std::string out;
  for (const auto& r : history) {
    out += record_to_json(r).dump();
    out += '\n';
  }
  return out;
}

void write_run_dir(const std::filesystem::path& dir,
                   const EvolveResult& result, const EvolutionConfig& cfg,
                   const SearchSpace& space, const FitnessEvaluator& evaluator,
                   bool overwrite) {
  if (std::filesystem::exists(dir)) {
    if (!overwrite)
      throw IoError("run directory " + dir.string() +
                    " exists; pass --overwrite to replace it");
  } else {
    std::filesystem::create_directories(dir);
  }

  auto write_text = [&](const char* name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw IoError("cannot write " + (dir / name).string());
    out << text;
    if (!out) throw IoError("failed writing " + (dir / name).string());
  };

  write_text("history.jsonl", history_to_jsonl(result.history));
  write_text("best.arch.json",
             architecture_to_json(result.best.chromosome, space.fixed()) +
                 "\n");

  nlohmann::ordered_json cache_json = nlohmann::ordered_json::object();
  for (const auto& [k, v] : result.cache_entries) cache_json[k] = v;
  write_text("cache.json", cache_json.dump(2) + "\n");

  nlohmann::ordered_json snap;
  snap["evolution"] = {
      {"max_gens", cfg.max_gens},
      {"pop_size", cfg.pop_size},
      {"p_cross", cfg.operators.p_cross},
      {"p_mutate", cfg.operators.p_mutate},
      {"mutation_type_probs", cfg.operators.mutation_type_probs},
      {"tournament_size", cfg.operators.tournament_size},
      {"seed", cfg.seed},
      {"parallel_evaluations", cfg.parallel_evaluations},
  };
  snap["search_space"] = {
      {"head_choices", space.head_choices()},
      {"mlp_dim_choices", space.mlp_dim_choices()},
      {"dropout_range", {space.dropout_low(), space.dropout_high()}},
      {"dropout_step", space.dropout_step()},
      {"layer_count_range", {space.min_layers(), space.max_layers()}},
      {"fixed",
       {{"hidden_dim", space.fixed().hidden_dim},
        {"embed_dim", space.fixed().embed_dim},
        {"image_size", space.fixed().image_size},
        {"patch_size", space.fixed().patch_size},
        {"channels", space.fixed().channels}}},
  };
  snap["evaluator"] = {{"description", evaluator.describe()},
                       {"seed", evaluator.seed()}};
  snap["result"] = {{"best_key", canonical_encode(result.best.chromosome)},
                    {"best_fitness", result.best.fitness.value()},
                    {"cache_hits", result.cache_hits},
                    {"cache_misses", result.cache_misses}};
  write_text("config.snapshot.json", snap.dump(2) + "\n");
}

std::map<std::string, double> load_cache_file(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open cache file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad cache file " + path.string() + ": " + e.what());
  }
  std::map<std::string, double> out;
  for (const auto& [k, v] : j.items()) {
    canonical_decode(k);  // validates the key shape
    out[k] = v.get<double>();
  }
  return out;
}

}  // namespace evostack
