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

#include "fusearch/evolution.h"

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "fusearch/errors.h"
#include "json.hpp"

namespace fusearch {

using nlohmann::json;

std::string_view ToString(EvaluatorKind k) {
  return k == EvaluatorKind::kNeural ? "neural" : "surrogate";
}
std::string_view ToString(SearchMode m) {
  return m == SearchMode::kSynchronous ? "sync" : "async";
}
std::string_view ToString(SearchSpace s) {
  return s == SearchSpace::kMultimodal ? "multimodal" : "unimodal";
}

EvaluatorKind ParseEvaluatorKind(std::string_view s) {
  if (s == "neural") return EvaluatorKind::kNeural;
  if (s == "surrogate") return EvaluatorKind::kSurrogate;
  throw std::invalid_argument("unknown evaluator '" + std::string(s) + "'");
}
SearchMode ParseSearchMode(std::string_view s) {
  if (s == "sync") return SearchMode::kSynchronous;
  if (s == "async") return SearchMode::kAsynchronous;
  throw std::invalid_argument("unknown mode '" + std::string(s) + "'");
}
SearchSpace ParseSearchSpace(std::string_view s) {
  if (s == "multimodal") return SearchSpace::kMultimodal;
  if (s == "unimodal") return SearchSpace::kUnimodal;
  throw std::invalid_argument("unknown search space '" + std::string(s) + "'");
}

void SearchConfig::Validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument(what);
  };
  need(population >= 1, "population must be at least 1");
  need(tournament >= 1 && tournament <= population, "tournament must lie in [1, population]");
  need(candidates >= 1, "candidates must be at least 1");
  need(mutation_rate >= 0 && mutation_rate <= 1, "mutation_rate must lie in [0, 1]");
  need(modalities >= 1, "modalities must be at least 1");
  need(workers >= 1, "workers must be at least 1");
  need(checkpoint_every >= 0, "checkpoint_every must be non-negative");
}

Genome SearchConfig::SeedGenome() const {
  if (space == SearchSpace::kUnimodal) return UnimodalSeedGenome();
  return fusearch::SeedGenome(seed_kind, modalities);
}

// ---------------------------------------------------------------------------
// Population and selection

void Population::Insert(Individual ind) {
  if (size() >= capacity_) throw ContractViolation("population is full");
  members_.push_back(std::move(ind));
}

void Population::Replace(std::int64_t dead_id, Individual child) {
  for (auto& m : members_) {
    if (m.id == dead_id) {
      m = std::move(child);
      return;
    }
  }
  throw ContractViolation("no member with id " + std::to_string(dead_id));
}

const Individual& Tournament(const Population& pop, int t, std::mt19937_64& rng,
                             Objective objective) {
  const int n = pop.size();
  if (n == 0) throw ContractViolation("tournament on an empty population");
  if (t < 1 || t > n) throw ContractViolation("tournament size outside [1, population]");
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  const Individual* best = nullptr;
  for (int i = 0; i < t; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
    const Individual& c = pop.members()[idx[i]];
    if (best == nullptr) {
      best = &c;
      continue;
    }
    const bool better = objective == Objective::kMax ? c.fitness > best->fitness
                                                     : c.fitness < best->fitness;
    if (better || (c.fitness == best->fitness && c.id < best->id)) best = &c;
  }
  return *best;
}

// ---------------------------------------------------------------------------
// Evaluators

namespace {

// Target layer sets of the surrogate landscape, by modality index mod 3.
bool SurrogateTarget(const LayerSpec& l, int m) {
  switch (m % 3) {
    case 0: return l.kind == LayerKind::kAttention;
    case 1: return l.kind == LayerKind::kSeparableConv && l.kernel >= 7;
    default: return l.kind == LayerKind::kLightweightConv && l.reduction == 4;
  }
}

}  // namespace

double SurrogateFitness(const Genome& genome) {
  const Vocabulary& vocab = Vocabulary::Default();
  const int mul = vocab.CombinerIndex(Combiner::kMul);
  double total = 0.0;
  const int M = genome.modality_count();
  for (int m = 0; m < M; ++m) {
    const auto& blocks = genome.modality_blocks()[m];
    if (blocks.empty()) continue;
    int hits = 0;
    for (const BlockGene& b : blocks) {
      hits += SurrogateTarget(vocab.layers[b.left.layer], m);
      hits += SurrogateTarget(vocab.layers[b.right.layer], m);
    }
    total += static_cast<double>(hits) / (2.0 * blocks.size());
  }
  const auto& fusion = genome.fusion_blocks();
  if (fusion.empty()) return total / M;
  int muls = 0;
  for (const BlockGene& b : fusion) muls += b.combiner == mul;
  total += static_cast<double>(muls) / fusion.size();
  return total / (M + 1);
}

Evaluator SurrogateEvaluator() {
  return [](const Genome& g, std::uint64_t) { return Evaluation{SurrogateFitness(g), false}; };
}

Evaluator NeuralEvaluator(const Dataset& data, const TrainConfig& config) {
  return [&data, config](const Genome& g, std::uint64_t seed) {
    TrainConfig c = config;
    c.seed = seed;
    const FitnessResult r = EvaluateCandidate(g, data, c);
    return Evaluation{r.rejected ? 0.0 : r.fitness, r.rejected};
  };
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

json GenomeJson(const Genome& g) {
  return {{"seed_name", g.seed_name()},
          {"generation", g.generation()},
          {"modality_blocks", g.layout().modality_blocks},
          {"fusion_blocks", g.layout().fusion_blocks},
          {"fields", g.Encode()}};
}

Genome GenomeFrom(const json& j) {
  GenomeLayout layout{j.at("modality_blocks").get<std::vector<int>>(),
                      j.at("fusion_blocks").get<int>()};
  return Genome::Decode(layout, j.at("fields").get<std::vector<int>>(),
                        j.at("seed_name").get<std::string>(), j.at("generation").get<int>());
}

json IndividualJson(const Individual& ind) {
  json j = {{"genome", GenomeJson(ind.genome)},
            {"fitness", ind.fitness},
            {"id", ind.id},
            {"parent_id", nullptr},
            {"created_at", ind.created_at},
            {"timestamp", ind.timestamp}};
  if (ind.parent_id) j["parent_id"] = *ind.parent_id;
  return j;
}

Individual IndividualFrom(const json& j) {
  Individual ind;
  ind.genome = GenomeFrom(j.at("genome"));
  ind.fitness = j.at("fitness").get<double>();
  ind.id = j.at("id").get<std::int64_t>();
  if (!j.at("parent_id").is_null()) ind.parent_id = j.at("parent_id").get<std::int64_t>();
  ind.created_at = j.at("created_at").get<std::int64_t>();
  ind.timestamp = j.at("timestamp").get<double>();
  return ind;
}

}  // namespace

std::string GenomeToJson(const Genome& genome) { return GenomeJson(genome).dump(); }

Genome GenomeFromJson(std::string_view text) {
  try {
    return GenomeFrom(json::parse(text));
  } catch (const json::exception& e) {
    throw FormatError(std::string("genome file: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("genome file: ") + e.what());
  }
}

std::string LogRecord(const Individual& ind) {
  json j = {{"id", ind.id},
            {"parent_id", nullptr},
            {"fitness", ind.fitness},
            {"timestamp", ind.timestamp}};
  if (ind.parent_id) j["parent_id"] = *ind.parent_id;
  return j.dump();
}

std::string ConfigHash(const SearchConfig& c, std::string_view salt) {
  char rate[32];
  std::snprintf(rate, sizeof rate, "%.17g", c.mutation_rate);
  std::ostringstream os;
  os << "population=" << c.population << ";tournament=" << c.tournament
     << ";candidates=" << c.candidates << ";rate=" << rate << ";seed_kind=" << ToString(c.seed_kind)
     << ";space=" << ToString(c.space) << ";modalities=" << c.modalities << ";seed=" << c.seed
     << ";evaluator=" << ToString(c.evaluator) << ";mode=" << ToString(c.mode)
     << ";salt=" << salt;
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : os.str()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

void WriteCheckpoint(const SearchState& s, const std::string& path) {
  std::ostringstream rng;
  rng << s.rng;
  json j = {{"format", "fusearch-checkpoint"},
            {"version", 1},
            {"config_hash", s.config_hash},
            {"rng", rng.str()},
            {"next_id", s.next_id},
            {"capacity", s.population.capacity()},
            {"population", json::array()},
            {"initial", json::array()},
            {"history", json::array()}};
  for (const auto& m : s.population.members()) j["population"].push_back(IndividualJson(m));
  for (const auto& m : s.initial) j["initial"].push_back(IndividualJson(m));
  for (const auto& m : s.history) j["history"].push_back(IndividualJson(m));
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp);
    out << j.dump() << "\n";
    if (!out) throw std::runtime_error("failed writing checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

SearchState ReadCheckpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path);
  try {
    const json j = json::parse(in);
    if (j.at("format") != "fusearch-checkpoint" || j.at("version") != 1) {
      throw FormatError("not a version-1 checkpoint: " + path);
    }
    SearchState s;
    s.config_hash = j.at("config_hash").get<std::string>();
    std::istringstream rng(j.at("rng").get<std::string>());
    rng >> s.rng;
    if (!rng) throw FormatError("bad rng state in " + path);
    s.next_id = j.at("next_id").get<std::int64_t>();
    s.population = Population(j.at("capacity").get<int>());
    for (const auto& m : j.at("population")) s.population.Insert(IndividualFrom(m));
    for (const auto& m : j.at("initial")) s.initial.push_back(IndividualFrom(m));
    for (const auto& m : j.at("history")) s.history.push_back(IndividualFrom(m));
    return s;
  } catch (const json::exception& e) {
    throw FormatError("checkpoint " + path + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError("checkpoint " + path + ": " + e.what());
  } catch (const ContractViolation& e) {
    throw FormatError("checkpoint " + path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Search

Population InitPopulation(const SearchConfig& config, const Evaluator& evaluator,
                          std::mt19937_64& rng, std::int64_t* next_id,
                          const std::function<void(const Individual&)>& on_initial) {
  config.Validate();
  const Genome seed = config.SeedGenome();
  Population pop(config.population);
  std::vector<Individual> members(config.population);
  std::vector<std::uint64_t> seeds(config.population);
  for (int i = 0; i < config.population; ++i) {
    members[i].genome = Mutate(seed, config.mutation_rate, rng);
    members[i].id = (*next_id)++;
    members[i].created_at = members[i].id;
    seeds[i] = rng();
  }
  std::vector<Evaluation> scores(config.population);
  auto score = [&](int i) { scores[i] = evaluator(members[i].genome, seeds[i]); };
  if (config.mode == SearchMode::kAsynchronous && config.workers > 1) {
    // Results land in fixed slots, so the outcome matches sequential scoring.
    std::atomic<int> next{0};
    std::vector<std::thread> threads;
    std::exception_ptr error;
    std::mutex error_mu;
    for (int w = 0; w < std::min(config.workers, config.population); ++w) {
      threads.emplace_back([&] {
        for (int i; (i = next.fetch_add(1)) < config.population;) {
          try {
            score(i);
          } catch (...) {
            std::lock_guard lock(error_mu);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
    for (auto& t : threads) t.join();
    if (error) std::rethrow_exception(error);
  } else {
    for (int i = 0; i < config.population; ++i) score(i);
  }
  bool any_ok = false;
  for (int i = 0; i < config.population; ++i) {
    members[i].fitness = scores[i].fitness;
    any_ok |= !scores[i].failed;
    if (on_initial) on_initial(members[i]);
    pop.Insert(members[i]);
  }
  if (!any_ok) throw ConfigError("every initial population member failed to evaluate");
  return pop;
}

namespace {

const Individual& Better(const Individual& a, const Individual& b) {
  if (b.fitness > a.fitness || (b.fitness == a.fitness && b.id < a.id)) return b;
  return a;
}

// Fixed-size pool of evaluation threads with a completion channel.
class WorkerPool {
 public:
  struct Job {
    Genome genome;
    std::uint64_t seed;
    std::int64_t parent_id;
  };
  struct Done {
    Job job;
    Evaluation result;
    std::exception_ptr error;
  };

  WorkerPool(int workers, const Evaluator& evaluator) : evaluator_(evaluator) {
    for (int i = 0; i < workers; ++i) threads_.emplace_back([this] { Loop(); });
  }
  ~WorkerPool() {
    {
      std::lock_guard lock(mu_);
      closing_ = true;
    }
    jobs_cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  void Submit(Job job) {
    {
      std::lock_guard lock(mu_);
      jobs_.push_back(std::move(job));
    }
    jobs_cv_.notify_one();
  }

  Done Next() {
    std::unique_lock lock(mu_);
    done_cv_.wait(lock, [this] { return !done_.empty(); });
    Done d = std::move(done_.front());
    done_.pop_front();
    return d;
  }

 private:
  void Loop() {
    for (;;) {
      Job job;
      {
        std::unique_lock lock(mu_);
        jobs_cv_.wait(lock, [this] { return closing_ || !jobs_.empty(); });
        if (jobs_.empty()) return;
        job = std::move(jobs_.front());
        jobs_.pop_front();
      }
      Done d{std::move(job), {}, nullptr};
      try {
        d.result = evaluator_(d.job.genome, d.job.seed);
      } catch (...) {
        d.error = std::current_exception();
      }
      {
        std::lock_guard lock(mu_);
        done_.push_back(std::move(d));
      }
      done_cv_.notify_one();
    }
  }

  const Evaluator& evaluator_;
  std::mutex mu_;
  std::condition_variable jobs_cv_, done_cv_;
  std::deque<Job> jobs_;
  std::deque<Done> done_;
  bool closing_ = false;
  std::vector<std::thread> threads_;
};

}  // namespace

SearchResult RunSearch(const SearchConfig& config, const Evaluator& evaluator,
                       const SearchOptions& options) {
  config.Validate();
  const auto start = std::chrono::steady_clock::now();
  double time_offset = 0.0;  // resumed runs continue the original clock
  auto now = [&] {
    return time_offset +
           std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };
  const std::string hash = ConfigHash(config, options.hash_salt);

  SearchState state;
  if (options.resume) {
    if (options.checkpoint_path.empty()) throw ConfigError("resume needs a checkpoint path");
    state = ReadCheckpoint(options.checkpoint_path);
    if (state.config_hash != hash) {
      throw ConfigError("checkpoint was written by a different configuration (hash " +
                        state.config_hash + ", expected " + hash + ")");
    }
    if (state.population.size() != config.population) {
      throw FormatError("checkpoint population size differs from the configuration");
    }
    if (!state.history.empty()) time_offset = state.history.back().timestamp;
  } else {
    state.config_hash = hash;
    state.rng.seed(config.seed);
    state.population = InitPopulation(config, evaluator, state.rng, &state.next_id,
                                      options.on_initial);
    state.initial = state.population.members();
  }

  SearchResult result;
  auto checkpoint = [&] {
    if (!options.checkpoint_path.empty()) WriteCheckpoint(state, options.checkpoint_path);
  };
  auto limit = [&] {
    std::int64_t c = config.candidates;
    if (options.stop_after >= 0) c = std::min<std::int64_t>(c, options.stop_after);
    return c;
  }();
  auto interrupted = [&] {
    return options.interrupt != nullptr && options.interrupt->load();
  };
  // Records a scored child: kill selection on the current population, then
  // replacement.
  auto complete = [&](Genome genome, std::int64_t parent_id, const Evaluation& e) {
    Individual child;
    child.genome = std::move(genome);
    child.fitness = e.fitness;
    child.id = state.next_id++;
    child.parent_id = parent_id;
    child.created_at = child.id;
    child.timestamp = now();
    const std::int64_t dead = Tournament(state.population, config.tournament, state.rng,
                                         Objective::kMin).id;
    state.population.Replace(dead, child);
    ++result.replacements;
    state.history.push_back(child);
    if (options.on_child) options.on_child(child, state);
    const auto n = static_cast<std::int64_t>(state.history.size());
    if (config.checkpoint_every > 0 && n % config.checkpoint_every == 0) checkpoint();
  };

  if (config.mode == SearchMode::kSynchronous) {
    result.max_in_flight = 1;
    while (static_cast<std::int64_t>(state.history.size()) < limit) {
      if (interrupted()) {
        result.interrupted = true;
        break;
      }
      const Individual& parent =
          Tournament(state.population, config.tournament, state.rng, Objective::kMax);
      const std::int64_t parent_id = parent.id;
      Genome child = Mutate(parent.genome, config.mutation_rate, state.rng);
      const std::uint64_t seed = state.rng();
      const Evaluation e = evaluator(child, seed);
      complete(std::move(child), parent_id, e);
    }
  } else {
    WorkerPool pool(config.workers, evaluator);
    std::int64_t dispatched = static_cast<std::int64_t>(state.history.size());
    int in_flight = 0;
    std::exception_ptr error;
    for (;;) {
      const bool stopping = interrupted() || error != nullptr;
      while (!stopping && in_flight < config.workers && dispatched < limit) {
        const Individual& parent =
            Tournament(state.population, config.tournament, state.rng, Objective::kMax);
        WorkerPool::Job job{Mutate(parent.genome, config.mutation_rate, state.rng), state.rng(),
                            parent.id};
        pool.Submit(std::move(job));
        ++in_flight;
        ++dispatched;
        result.max_in_flight = std::max(result.max_in_flight, in_flight);
      }
      if (in_flight == 0) break;
      WorkerPool::Done d = pool.Next();
      --in_flight;
      if (d.error) {
        if (!error) error = d.error;
        continue;
      }
      complete(std::move(d.job.genome), d.job.parent_id, d.result);
    }
    if (error) {
      checkpoint();
      std::rethrow_exception(error);
    }
    result.interrupted = interrupted() && static_cast<std::int64_t>(state.history.size()) < limit;
  }
  checkpoint();

  result.history = state.history;
  result.initial = state.initial;
  result.final_population = state.population.members();
  result.best = state.initial.front();
  for (const auto& m : state.initial) result.best = Better(result.best, m);
  for (const auto& m : state.history) result.best = Better(result.best, m);
  return result;
}

}  // namespace fusearch
