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

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <thread>

#include "doctest.h"
#include "fusearch/errors.h"
#include "fusearch/evolution.h"
#include "test_util.h"

namespace fusearch {
namespace {

namespace fs = std::filesystem;
using testing::RandomGenome;
using testing::ReferenceLayout;

fs::path TempDir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("fusearch_evolution_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

SearchConfig Small(int c = 300, std::uint64_t seed = 1) {
  SearchConfig cfg;
  cfg.population = 20;
  cfg.tournament = 5;
  cfg.candidates = c;
  cfg.seed = seed;
  cfg.mutation_rate = 0.05;
  cfg.checkpoint_every = 0;
  return cfg;
}

bool SameHistory(const std::vector<Individual>& a, const std::vector<Individual>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].SameAs(b[i])) return false;
  }
  return true;
}

Population Make(const std::vector<double>& fitness) {
  Population p(static_cast<int>(fitness.size()));
  for (std::size_t i = 0; i < fitness.size(); ++i) {
    Individual ind;
    ind.id = static_cast<std::int64_t>(i);
    ind.fitness = fitness[i];
    p.Insert(ind);
  }
  return p;
}

// Independent scoring of the surrogate closed form, working on the encoded
// field list and the layer names.
double SurrogateOracle(const Genome& g) {
  const Vocabulary& v = Vocabulary::Default();
  const GenomeLayout layout = g.layout();
  const std::vector<int> f = g.Encode();
  auto target = [&](int layer, int m) {
    const std::string& name = v.layers[layer].name;
    const LayerSpec& l = v.layers[layer];
    if (m % 3 == 0) return name.find("attention") != std::string::npos;
    if (m % 3 == 1) return l.kind == LayerKind::kSeparableConv && (l.kernel == 7 ||
                                                                   l.kernel == 9 ||
                                                                   l.kernel == 11);
    return l.kind == LayerKind::kLightweightConv && l.reduction == 4;
  };
  double sum = 0;
  int pos = 0;
  for (int m = 0; m < layout.modality_count(); ++m) {
    const int n = layout.modality_blocks[m];
    int hits = 0;
    for (int b = 0; b < n; ++b, pos += 11) hits += target(f[pos + 2], m) + target(f[pos + 7], m);
    if (n > 0) sum += hits / (2.0 * n);
  }
  if (layout.fusion_blocks == 0) return sum / layout.modality_count();
  int muls = 0;
  for (int b = 0; b < layout.fusion_blocks; ++b, pos += 11) {
    muls += v.combiners[f[pos + 10]] == Combiner::kMul;
  }
  return (sum + static_cast<double>(muls) / layout.fusion_blocks) / (layout.modality_count() + 1);
}

TEST_CASE("config validation") {
  SearchConfig c;
  CHECK_NOTHROW(c.Validate());
  c.tournament = 101;
  CHECK_THROWS_AS(c.Validate(), std::invalid_argument);
  c = {};
  c.candidates = 0;
  CHECK_THROWS_AS(c.Validate(), std::invalid_argument);
  c = {};
  c.population = 0;
  CHECK_THROWS_AS(c.Validate(), std::invalid_argument);
}

TEST_CASE("tournament examples") {
  std::mt19937_64 rng(1);
  const Population p = Make({0.1, 0.9});
  CHECK(Tournament(p, 2, rng, Objective::kMax).fitness == 0.9);
  CHECK(Tournament(p, 2, rng, Objective::kMin).fitness == 0.1);
  const Population ties = Make({0.5, 0.5, 0.5});
  CHECK(Tournament(ties, 3, rng, Objective::kMax).id == 0);
  CHECK(Tournament(ties, 3, rng, Objective::kMin).id == 0);
  CHECK_THROWS_AS(Tournament(Population(3), 1, rng, Objective::kMax), ContractViolation);
  CHECK_THROWS_AS(Tournament(p, 3, rng, Objective::kMax), ContractViolation);
}

TEST_CASE("tournament of one is uniform") {
  const int P = 10, draws = 100000;
  const Population p = Make(std::vector<double>(P, 0.0));
  std::mt19937_64 rng(3);
  std::vector<int> counts(P);
  for (int i = 0; i < draws; ++i) ++counts[Tournament(p, 1, rng, Objective::kMax).id];
  const double expected = static_cast<double>(draws) / P;
  const double sigma = std::sqrt(draws * (1.0 / P) * (1 - 1.0 / P));
  for (int c : counts) CHECK(std::abs(c - expected) < 3 * sigma);
}

TEST_CASE("tournament samples without replacement") {
  // With T = P the whole population is seen, so the extreme always wins.
  std::mt19937_64 rng(4);
  const Population p = Make({0.3, 0.2, 0.8, 0.1, 0.5});
  for (int i = 0; i < 100; ++i) {
    CHECK(Tournament(p, 5, rng, Objective::kMax).id == 2);
    CHECK(Tournament(p, 5, rng, Objective::kMin).id == 3);
  }
}

TEST_CASE("initial population") {
  const Genome seed = SeedGenome(FusionKind::kHybrid, 3);
  const std::vector<int> seed_fields = seed.Encode();
  SUBCASE("mutated copies at the configured rate") {
    SearchConfig c;
    c.population = 1000;
    c.tournament = 1;
    std::mt19937_64 rng(9);
    std::int64_t next = 0;
    const Population p = InitPopulation(c, SurrogateEvaluator(), rng, &next);
    CHECK(p.size() == 1000);
    CHECK(next == 1000);
    double mean = 0;
    for (const auto& m : p.members()) {
      const auto f = m.genome.Encode();
      REQUIRE(f.size() == 154);
      int d = 0;
      for (std::size_t i = 0; i < f.size(); ++i) d += f[i] != seed_fields[i];
      mean += d;
      CHECK(m.fitness == SurrogateFitness(m.genome));
    }
    mean /= 1000;
    // 148 of the 154 fields can change; 148 * 0.01875 = 2.775.
    CHECK(mean == doctest::Approx(2.775).epsilon(0.08));
  }
  SUBCASE("P = 1") {
    SearchConfig c;
    c.population = 1;
    c.tournament = 1;
    std::mt19937_64 rng(1);
    std::int64_t next = 0;
    CHECK(InitPopulation(c, SurrogateEvaluator(), rng, &next).size() == 1);
  }
  SUBCASE("rate 0 gives identical copies") {
    SearchConfig c;
    c.mutation_rate = 0;
    std::mt19937_64 rng(1);
    std::int64_t next = 0;
    const Population p = InitPopulation(c, SurrogateEvaluator(), rng, &next);
    for (const auto& m : p.members()) {
      CHECK(m.genome.SameGenes(seed));
    }
  }
  SUBCASE("all evaluations failing is a configuration error") {
    SearchConfig c = Small();
    std::mt19937_64 rng(1);
    std::int64_t next = 0;
    const Evaluator broken = [](const Genome&, std::uint64_t) { return Evaluation{0.0, true}; };
    CHECK_THROWS_AS(InitPopulation(c, broken, rng, &next), ConfigError);
  }
}

TEST_CASE("surrogate landscape") {
  CHECK(SurrogateFitness(SeedGenome(FusionKind::kHybrid, 3)) == doctest::Approx(1.0 / 24));
  CHECK(SurrogateFitness(SeedGenome(FusionKind::kHybrid, 3)) ==
        SurrogateFitness(SeedGenome(FusionKind::kHybrid, 3)));

  // A genome meeting every target.
  const Vocabulary& v = Vocabulary::Default();
  const int targets[] = {v.LayerIndex(LayerKind::kAttention, 0, 0, 8),
                         v.LayerIndex(LayerKind::kSeparableConv, 9),
                         v.LayerIndex(LayerKind::kLightweightConv, 3, 4)};
  std::vector<int> f = SeedGenome(FusionKind::kHybrid, 3).Encode();
  const GenomeLayout layout = ReferenceLayout();
  int pos = 0;
  for (int m = 0; m < 3; ++m) {
    for (int b = 0; b < 3; ++b, pos += 11) f[pos + 2] = f[pos + 7] = targets[m];
  }
  for (int b = 0; b < 5; ++b, pos += 11) f[pos + 10] = v.CombinerIndex(Combiner::kMul);
  CHECK(SurrogateFitness(Genome::Decode(layout, f)) == 1.0);

  std::mt19937_64 rng(17);
  for (int i = 0; i < 500; ++i) {
    const Genome g = RandomGenome(i % 2 ? layout : GenomeLayout{{2, 0, 4, 1}, i % 3}, rng,
                                  Vocabulary::Default());
    const double s = SurrogateFitness(g);
    CHECK(s == doctest::Approx(SurrogateOracle(g)).epsilon(1e-12));
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
  }
}

TEST_CASE("synchronous search replays and keeps invariants") {
  const SearchConfig c = Small();
  int steps = 0;
  double best_so_far = -1;
  SearchOptions o;
  o.on_child = [&](const Individual& child, const SearchState& s) {
    ++steps;
    CHECK(s.population.size() == c.population);
    const double best = std::max(best_so_far, child.fitness);
    CHECK(best >= best_so_far);
    best_so_far = best;
  };
  const SearchResult a = RunSearch(c, SurrogateEvaluator(), o);
  const SearchResult b = RunSearch(c, SurrogateEvaluator());
  CHECK(steps == c.candidates);
  CHECK(a.history.size() == 300);
  CHECK(SameHistory(a.history, b.history));
  CHECK(SameHistory(a.final_population, b.final_population));
  CHECK(a.best.SameAs(b.best));
  CHECK(a.replacements == 300);

  std::set<std::int64_t> ids;
  std::int64_t previous = -1;
  for (const auto& h : a.history) {
    CHECK(h.id > previous);
    previous = h.id;
    ids.insert(h.id);
    REQUIRE(h.parent_id.has_value());
    CHECK(*h.parent_id < h.id);
  }
  CHECK(ids.size() == 300);
  for (const auto& h : a.history) CHECK(h.fitness <= a.best.fitness);
  for (const auto& h : a.initial) CHECK(h.fitness <= a.best.fitness);

  SearchConfig other = c;
  other.seed = 2;
  CHECK_FALSE(SameHistory(RunSearch(other, SurrogateEvaluator()).history, a.history));
}

TEST_CASE("one candidate") {
  SearchConfig c = Small(1);
  const SearchResult r = RunSearch(c, SurrogateEvaluator());
  CHECK(r.history.size() == 1);
  CHECK(r.final_population.size() == 20);
}

TEST_CASE("zero-rate search leaves a uniform population unchanged") {
  SearchConfig c = Small(200);
  c.mutation_rate = 0;
  const SearchResult r = RunSearch(c, SurrogateEvaluator());
  const Genome seed = c.SeedGenome();
  for (const auto& m : r.final_population) CHECK(m.genome.SameGenes(seed));
  for (const auto& h : r.history) CHECK(h.genome.SameGenes(seed));
}

TEST_CASE("checkpoint and resume reproduce the uninterrupted run") {
  const fs::path dir = TempDir("resume");
  SearchConfig c = Small(400, 5);
  c.checkpoint_every = 50;
  const SearchResult full = RunSearch(c, SurrogateEvaluator());

  SearchOptions first;
  first.checkpoint_path = (dir / "ckpt.json").string();
  first.stop_after = 200;
  const SearchResult half = RunSearch(c, SurrogateEvaluator(), first);
  CHECK(half.history.size() == 200);
  CHECK(ReadCheckpoint(first.checkpoint_path).history.size() == 200);

  SearchOptions second;
  second.checkpoint_path = first.checkpoint_path;
  second.resume = true;
  const SearchResult resumed = RunSearch(c, SurrogateEvaluator(), second);
  CHECK(SameHistory(resumed.history, full.history));
  CHECK(SameHistory(resumed.final_population, full.final_population));
  CHECK(SameHistory(resumed.initial, full.initial));
  CHECK(resumed.best.SameAs(full.best));

  // Resuming at an odd point (between periodic checkpoints) works too.
  SearchOptions odd = first;
  odd.checkpoint_path = (dir / "odd.json").string();
  odd.stop_after = 123;
  RunSearch(c, SurrogateEvaluator(), odd);
  odd.stop_after = -1;
  odd.resume = true;
  CHECK(SameHistory(RunSearch(c, SurrogateEvaluator(), odd).history, full.history));

  SUBCASE("a different configuration is refused") {
    SearchConfig changed = c;
    changed.mutation_rate = 0.02;
    CHECK_THROWS_AS(RunSearch(changed, SurrogateEvaluator(), second), ConfigError);
    SearchOptions salted = second;
    salted.hash_salt = "steps=10";
    CHECK_THROWS_AS(RunSearch(c, SurrogateEvaluator(), salted), ConfigError);
  }
  SUBCASE("malformed checkpoints are rejected") {
    const std::string bad = (dir / "bad.json").string();
    std::ofstream(bad) << "{\"format\": \"fusearch-checkpoint\", \"version\": 1}";
    CHECK_THROWS_AS(ReadCheckpoint(bad), FormatError);
    std::ofstream(bad) << "not json";
    CHECK_THROWS_AS(ReadCheckpoint(bad), FormatError);
    CHECK_THROWS_AS(ReadCheckpoint((dir / "missing.json").string()), FormatError);
  }
  fs::remove_all(dir);
}

TEST_CASE("asynchronous search under random worker delays") {
  SearchConfig c = Small(120, 3);
  c.mode = SearchMode::kAsynchronous;
  c.workers = 4;
  std::atomic<int> running{0}, peak{0};
  const Evaluator slow = [&](const Genome& g, std::uint64_t seed) {
    const int now = ++running;
    int p = peak.load();
    while (now > p && !peak.compare_exchange_weak(p, now)) {}
    std::this_thread::sleep_for(std::chrono::microseconds(seed % 1500));
    --running;
    return Evaluation{SurrogateFitness(g), false};
  };
  int population_checks = 0;
  SearchOptions o;
  o.on_child = [&](const Individual&, const SearchState& s) {
    population_checks += s.population.size() == c.population;
  };
  const SearchResult r = RunSearch(c, slow, o);
  CHECK(r.max_in_flight <= 4);
  CHECK(r.max_in_flight >= 2);
  CHECK(peak.load() <= 4);
  CHECK(r.replacements == 120);
  CHECK(r.history.size() == 120);
  CHECK(population_checks == 120);
  CHECK(r.final_population.size() == 20);
  std::set<std::int64_t> ids;
  for (const auto& h : r.history) ids.insert(h.id);
  CHECK(ids.size() == 120);
  // Every child id appears at most once in the final population.
  std::set<std::int64_t> members;
  for (const auto& m : r.final_population) members.insert(m.id);
  CHECK(members.size() == 20);
}

TEST_CASE("an interrupt stops the search cleanly with a checkpoint") {
  const fs::path dir = TempDir("interrupt");
  for (SearchMode mode : {SearchMode::kSynchronous, SearchMode::kAsynchronous}) {
    SearchConfig c = Small(500, 8);
    c.mode = mode;
    c.workers = 3;
    std::atomic<bool> stop{false};
    SearchOptions o;
    o.checkpoint_path = (dir / "ckpt.json").string();
    o.interrupt = &stop;
    o.on_child = [&](const Individual&, const SearchState& s) {
      if (s.history.size() == 40) stop = true;
    };
    const SearchResult r = RunSearch(c, SurrogateEvaluator(), o);
    CHECK(r.interrupted);
    CHECK(r.history.size() >= 40);
    CHECK(r.history.size() < 500);
    CHECK(ReadCheckpoint(o.checkpoint_path).history.size() == r.history.size());
  }
  fs::remove_all(dir);
}

TEST_CASE("genome files round trip") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 50; ++i) {
    const Genome g =
        RandomGenome(ReferenceLayout(), rng, Vocabulary::Default()).WithMetadata("x", i);
    CHECK(GenomeFromJson(GenomeToJson(g)) == g);
  }
  CHECK_THROWS_AS(GenomeFromJson("{}"), FormatError);
  CHECK_THROWS_AS(GenomeFromJson("[1, 2"), FormatError);
}

TEST_CASE("log records") {
  Individual ind;
  ind.id = 7;
  ind.parent_id = 3;
  ind.fitness = 0.25;
  ind.timestamp = 1.5;
  CHECK(LogRecord(ind) == R"({"fitness":0.25,"id":7,"parent_id":3,"timestamp":1.5})");
  ind.parent_id.reset();
  CHECK(LogRecord(ind) == R"({"fitness":0.25,"id":7,"parent_id":null,"timestamp":1.5})");
}

TEST_CASE("surrogate search reaches the optimum region") {
  for (std::uint64_t seed : {11, 12, 13}) {
    SearchConfig c;
    c.seed = seed;
    c.checkpoint_every = 0;
    CHECK(RunSearch(c, SurrogateEvaluator()).best.fitness >= 0.95);
  }
}

TEST_CASE("a neural search runs end to end") {
  DatasetSpec s;
  s.num_examples = 200;
  const Dataset data = Generate(s);
  TrainConfig t;
  t.steps = 3;
  t.embedding_width = 4;
  SearchConfig c = Small(4);
  c.population = 3;
  c.tournament = 2;
  c.evaluator = EvaluatorKind::kNeural;
  const SearchResult r = RunSearch(c, NeuralEvaluator(data, t));
  CHECK(r.history.size() == 4);
  for (const auto& h : r.history) {
    CHECK(h.fitness >= 0.0);
    CHECK(h.fitness <= 1.0);
  }
}

}  // namespace
}  // namespace fusearch
