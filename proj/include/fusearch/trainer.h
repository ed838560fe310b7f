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

// Candidate training and fitness evaluation.
//
// A candidate genome is wrapped into a classifier: per-modality embeddings
// feed the compiled graph, its output is averaged over time, concatenated
// with the context features and mapped to class logits by a dense layer.
// Fitness is validation recall@k after a fixed number of Adam updates.

#ifndef FUSEARCH_TRAINER_H_
#define FUSEARCH_TRAINER_H_

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fusearch/data.h"
#include "fusearch/errors.h"
#include "fusearch/executor.h"
#include "fusearch/genome.h"
#include "fusearch/graph.h"
#include "fusearch/parameters.h"
#include "fusearch/tensor.h"

namespace fusearch {

enum class Schedule { kConstant, kLinearDecay, kExponentialDecay, kCosine, kInverseSqrt };

std::string_view ToString(Schedule s);
Schedule ParseSchedule(std::string_view name);

// How the three data modalities reach the graph's input paths.
enum class Routing {
  kPerModality,   // modality m feeds input m (genome has 3 modalities)
  kConcatenated,  // one input path receiving all modalities concatenated
  kForcedEarly,   // every input path receives all modalities concatenated
};

std::string_view ToString(Routing r);
Routing ParseRouting(std::string_view name);

inline constexpr int kDataModalities = 3;  // categorical, continuous, notes

struct TrainConfig {
  int steps = 2000;
  int batch_size = 32;
  double peak_lr = 4.23e-4;
  Schedule schedule = Schedule::kCosine;
  std::uint64_t seed = 0;
  std::int64_t budget = 76'000'000;  // graph parameters
  int embedding_width = 16;
  int recall_k = 5;
  Routing routing = Routing::kPerModality;
  int max_width = kDefaultMaxWidth;
  // Adam.
  double beta1 = 0.9;
  double beta2 = 0.997;
  double epsilon = 1e-9;

  // Throws std::invalid_argument naming the offending field.
  void Validate() const;
};

// Learning rate for the update at `step` (0-based), 0 <= step <= steps:
//   constant            peak
//   linear-decay        peak * (1 - step / steps)
//   exponential-decay   peak * 0.01^(step / steps)
//   single-cycle-cosine peak * 0.5 * (1 + cos(pi * step / steps))
//   inverse-sqrt        peak / sqrt(max(1, step))
// Throws ContractViolation outside that range.
double LrAt(const TrainConfig& config, int step);

// Fraction of rows of `logits` (N, K) whose label is among the k largest
// entries. Equal logits rank the lower class index first.
template <typename T>
double RecallAtK(const Tensor<T>& logits, const std::vector<int>& labels, int k) {
  if (logits.rank() != 2) throw ContractViolation("recall@k: logits must be (N, K)");
  const int n = logits.dim(0), classes = logits.dim(1);
  if (n == 0) throw ContractViolation("recall@k: empty batch");
  if (static_cast<int>(labels.size()) != n) {
    throw ContractViolation("recall@k: label count differs from batch size");
  }
  if (k < 1 || k > classes) throw ContractViolation("recall@k: k outside [1, classes]");
  int hits = 0;
  for (int i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || y >= classes) throw ContractViolation("recall@k: label out of range");
    const T* row = logits.data() + static_cast<std::size_t>(i) * classes;
    int ahead = 0;
    for (int j = 0; j < classes && ahead < k; ++j) {
      if (row[j] > row[y] || (row[j] == row[y] && j < y)) ++ahead;
    }
    hits += ahead < k;
  }
  return static_cast<double>(hits) / n;
}

// One classifier instance: its own parameters, no shared state.
class FusionModel {
 public:
  // Throws CompileError when the genome does not compile at these widths and
  // std::invalid_argument when the routing does not fit the genome.
  FusionModel(const Genome& genome, const DatasetSpec& data, const TrainConfig& config);

  const ComputationGraph& graph() const { return network_->graph(); }
  std::int64_t graph_parameter_count() const { return network_->parameter_count(); }
  ParameterStore<float>& parameters() { return store_; }

  // Mean cross-entropy of one Adam update on `batch`; the update is skipped
  // when the loss is not finite.
  double TrainStep(const std::vector<const MultimodalExample*>& batch, double lr);
  // Logits (N, K) in evaluation mode, computed in chunks.
  Tensor<float> Logits(const std::vector<MultimodalExample>& examples);

  std::int64_t updates_applied() const { return updates_; }

 private:
  int Forward(Tape<float>& tape, const std::vector<const MultimodalExample*>& batch,
              bool training);
  int Param(Tape<float>& tape, int index);

  DatasetSpec data_;
  TrainConfig config_;
  ParameterStore<float> store_;
  std::unique_ptr<GraphNetwork<float>> network_;
  int categorical_table_ = -1, notes_table_ = -1;
  int continuous_w_ = -1, continuous_b_ = -1;
  int head_w_ = -1, head_b_ = -1;
  std::vector<Tensor<float>> adam_m_, adam_v_;
  std::int64_t updates_ = 0;
};

struct FitnessResult {
  double fitness = 0.0;
  std::vector<double> train_loss_curve;  // one entry per update
  double wall_time = 0.0;                // seconds
  bool rejected = false;
  std::string reason;                    // "over budget", "diverged", ...
  std::int64_t parameter_count = 0;      // graph parameters, when compiled
  std::int64_t updates_applied = 0;

  // Equality ignores wall_time.
  bool SameOutcome(const FitnessResult& other) const;
};

// Compiles, checks the budget, trains, and scores on the validation split.
// When `log` is non-null one JSON line is appended:
//   {"genome_id":..., "fitness":..., "steps":..., "wall_time":...,
//    "rejected":..., "reason":..., "parameters":...}
FitnessResult EvaluateCandidate(const Genome& genome, const Dataset& data,
                                const TrainConfig& config, std::ostream* log = nullptr,
                                const std::string& genome_id = "");

}  // namespace fusearch

#endif  // FUSEARCH_TRAINER_H_
