// Copyright 2026 The Fusearch Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Tournament-selection evolution over genomes.
//
// The population starts as P mutated copies of a seed genome. Each step picks
// a parent as the fittest of T uniformly sampled members, mutates it, scores
// the child, and replaces the least fit of another T-sample with it. The
// search returns the best individual ever scored.
//
// Two execution modes exist. Synchronous mode evaluates one child at a time
// and replays bit-identically from a seed, including across checkpoints.
// Asynchronous mode keeps up to `workers` evaluations in flight: parents are
// chosen from the population as it is at dispatch, and the replaced member is
// chosen from the population as it is when the child's score arrives.

#ifndef FUSEARCH_EVOLUTION_H_
#define FUSEARCH_EVOLUTION_H_

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "fusearch/data.h"
#include "fusearch/genome.h"
#include "fusearch/search_space.h"
#include "fusearch/trainer.h"

namespace fusearch {

enum class EvaluatorKind { kNeural, kSurrogate };
enum class SearchMode { kSynchronous, kAsynchronous };
// Which genome family is searched: the full multimodal space or a single
// input path fed with all modalities concatenated.
enum class SearchSpace { kMultimodal, kUnimodal };

std::string_view ToString(EvaluatorKind k);
std::string_view ToString(SearchMode m);
std::string_view ToString(SearchSpace s);
EvaluatorKind ParseEvaluatorKind(std::string_view s);
SearchMode ParseSearchMode(std::string_view s);
SearchSpace ParseSearchSpace(std::string_view s);

struct SearchConfig {
  int population = 100;
  int tournament = 30;
  int candidates = 5000;
  double mutation_rate = 0.01875;
  FusionKind seed_kind = FusionKind::kHybrid;
  SearchSpace space = SearchSpace::kMultimodal;
  int modalities = 3;  // multimodal space only
  std::uint64_t seed = 0;
  EvaluatorKind evaluator = EvaluatorKind::kSurrogate;
  SearchMode mode = SearchMode::kSynchronous;
  int workers = 1;            // asynchronous mode
  int checkpoint_every = 100; // children between checkpoints; 0 disables

  // Throws std::invalid_argument.
  void Validate() const;
  // Seed genome for this configuration.
  Genome SeedGenome() const;
};

struct Individual {
  Genome genome;
  double fitness = 0.0;
  std::int64_t id = 0;
  std::optional<std::int64_t> parent_id;
  std::int64_t created_at = 0;  // == id; initial members take 0..P-1
  double timestamp = 0.0;       // seconds since the search started

  // Equality ignores the timestamp.
  bool SameAs(const Individual& o) const {
    return genome == o.genome && fitness == o.fitness && id == o.id &&
           parent_id == o.parent_id && created_at == o.created_at;
  }
};

class Population {
 public:
  explicit Population(int capacity) : capacity_(capacity) {}

  int capacity() const { return capacity_; }
  int size() const { return static_cast<int>(members_.size()); }
  const std::vector<Individual>& members() const { return members_; }
  // Only while filling; throws ContractViolation when full.
  void Insert(Individual ind);
  // Atomically swaps the member with id `dead_id` for `child`.
  void Replace(std::int64_t dead_id, Individual child);

 private:
  int capacity_;
  std::vector<Individual> members_;
};

enum class Objective { kMax, kMin };

// Samples `t` members uniformly without replacement and returns the fittest
// (kMax) or least fit (kMin). Equal fitness prefers the lower id.
const Individual& Tournament(const Population& pop, int t, std::mt19937_64& rng,
                             Objective objective);

struct Evaluation {
  double fitness = 0.0;
  bool failed = false;  // rejected, diverged, or otherwise unusable
};

// Must be safe to call concurrently; receives a per-candidate seed.
using Evaluator = std::function<Evaluation(const Genome&, std::uint64_t seed)>;

// Surrogate landscape. For a genome with M modality architectures and F
// fusion blocks:
//   a_m = share of modality m's branches whose layer is in the target set
//         for m mod 3: 0 -> any attention layer, 1 -> separable conv with
//         kernel >= 7, 2 -> lightweight conv with 4 kernel groups
//   c   = share of fusion blocks whose combiner is multiplication
//   fitness = (sum_m a_m + c) / (M + 1), or the mean of a_m when F = 0.
// The optimum 1.0 is reached exactly by genomes meeting every target; the
// hybrid seed with three modalities scores 1/24 (one attention branch of
// six in modality 0).
double SurrogateFitness(const Genome& genome);
Evaluator SurrogateEvaluator();

// Wraps EvaluateCandidate. The candidate seed replaces config.seed; failed
// candidates score 0. `data` must outlive the evaluator.
Evaluator NeuralEvaluator(const Dataset& data, const TrainConfig& config);

struct SearchState {
  Population population{1};
  std::vector<Individual> history;  // children, in completion order
  std::vector<Individual> initial;  // the first P members
  std::mt19937_64 rng;
  std::int64_t next_id = 0;
  std::string config_hash;
};

struct SearchOptions {
  // Checkpoint file; empty disables checkpointing.
  std::string checkpoint_path;
  // Resume from checkpoint_path; refuses when the config hash differs.
  bool resume = false;
  // Extra text hashed with the config (for example evaluator settings).
  std::string hash_salt;
  // Stop once the history holds this many children; -1 runs to completion.
  std::int64_t stop_after = -1;
  // Set asynchronously to request a clean stop.
  const std::atomic<bool>* interrupt = nullptr;
  // Called in the controller thread after each child is recorded.
  std::function<void(const Individual&, const SearchState&)> on_child;
  // Called after each initial member is scored.
  std::function<void(const Individual&)> on_initial;
};

struct SearchResult {
  Individual best;  // over initial members and all children
  std::vector<Individual> history;
  std::vector<Individual> initial;
  std::vector<Individual> final_population;
  bool interrupted = false;
  int max_in_flight = 0;
  std::int64_t replacements = 0;
};

// Builds P mutated seeds and scores them (sequentially in synchronous mode).
// Throws ConfigError when every initial evaluation fails.
Population InitPopulation(const SearchConfig& config, const Evaluator& evaluator,
                          std::mt19937_64& rng, std::int64_t* next_id,
                          const std::function<void(const Individual&)>& on_initial = {});

SearchResult RunSearch(const SearchConfig& config, const Evaluator& evaluator,
                       const SearchOptions& options = {});

// 64-bit FNV-1a of a canonical rendering of the config plus `salt`, in hex.
std::string ConfigHash(const SearchConfig& config, std::string_view salt = "");

// Checkpoint: JSON with config hash, rng state, population, initial members,
// history and the next id. Written atomically through a temporary file.
void WriteCheckpoint(const SearchState& state, const std::string& path);
// Throws FormatError on malformed files.
SearchState ReadCheckpoint(const std::string& path);

// Genome files: {"seed_name", "generation", "modality_blocks", "fusion_blocks",
// "fields"}.
std::string GenomeToJson(const Genome& genome);
Genome GenomeFromJson(std::string_view text);

// One search-log line: {"id", "parent_id", "fitness", "timestamp"}.
std::string LogRecord(const Individual& ind);

}  // namespace fusearch

#endif  // FUSEARCH_EVOLUTION_H_
