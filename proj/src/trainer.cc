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

#include "fusearch/trainer.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>

#include "json.hpp"

namespace fusearch {

std::string_view ToString(Schedule s) {
  switch (s) {
    case Schedule::kConstant: return "constant";
    case Schedule::kLinearDecay: return "linear-decay";
    case Schedule::kExponentialDecay: return "exponential-decay";
    case Schedule::kCosine: return "single-cycle-cosine";
    case Schedule::kInverseSqrt: return "inverse-sqrt";
  }
  return "?";
}

Schedule ParseSchedule(std::string_view name) {
  for (Schedule s : {Schedule::kConstant, Schedule::kLinearDecay, Schedule::kExponentialDecay,
                     Schedule::kCosine, Schedule::kInverseSqrt}) {
    if (ToString(s) == name) return s;
  }
  if (name == "cosine") return Schedule::kCosine;
  throw std::invalid_argument("unknown schedule '" + std::string(name) + "'");
}

std::string_view ToString(Routing r) {
  switch (r) {
    case Routing::kPerModality: return "per-modality";
    case Routing::kConcatenated: return "concatenated";
    case Routing::kForcedEarly: return "forced-early";
  }
  return "?";
}

Routing ParseRouting(std::string_view name) {
  for (Routing r : {Routing::kPerModality, Routing::kConcatenated, Routing::kForcedEarly}) {
    if (ToString(r) == name) return r;
  }
  throw std::invalid_argument("unknown routing '" + std::string(name) + "'");
}

void TrainConfig::Validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
  };
  need(steps > 0, "steps must be positive");
  need(batch_size > 0, "batch_size must be positive");
  need(peak_lr > 0 && std::isfinite(peak_lr), "peak_lr must be positive");
  need(budget > 0, "budget must be positive");
  need(embedding_width > 0, "embedding_width must be positive");
  need(recall_k > 0, "recall_k must be positive");
  need(max_width > 0, "max_width must be positive");
  need(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, "Adam betas must lie in [0, 1)");
  need(epsilon > 0, "Adam epsilon must be positive");
}

double LrAt(const TrainConfig& config, int step) {
  if (step < 0 || step > config.steps) {
    throw ContractViolation("lr_at: step " + std::to_string(step) + " outside [0, " +
                            std::to_string(config.steps) + "]");
  }
  const double p = config.peak_lr;
  const double frac = static_cast<double>(step) / config.steps;
  switch (config.schedule) {
    case Schedule::kConstant: return p;
    case Schedule::kLinearDecay: return p * (1.0 - frac);
    case Schedule::kExponentialDecay: return p * std::pow(0.01, frac);
    case Schedule::kCosine:
      // Exact endpoints, free of cos(pi) rounding.
      if (step == config.steps) return 0.0;
      if (2 * step == config.steps) return p / 2;
      return p * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
    case Schedule::kInverseSqrt: return p / std::sqrt(std::max(1.0, static_cast<double>(step)));
  }
  return p;
}

// ---------------------------------------------------------------------------
// FusionModel

namespace {

// Embedding rows and the continuous projection start near unit scale so the
// modality signal is not swamped by the position signal at initialisation.
void Rescale(ParameterStore<float>& store, int index, double factor) {
  for (float& v : store.at(index).value.values()) v = static_cast<float>(v * factor);
}

}  // namespace

FusionModel::FusionModel(const Genome& genome, const DatasetSpec& data,
                         const TrainConfig& config)
    : data_(data), config_(config), store_(config.seed) {
  config_.Validate();
  const int d = config_.embedding_width;
  std::vector<int> widths;
  switch (config_.routing) {
    case Routing::kPerModality:
      if (genome.modality_count() != kDataModalities) {
        throw std::invalid_argument("per-modality routing needs a 3-modality genome");
      }
      widths.assign(kDataModalities, d);
      break;
    case Routing::kConcatenated:
      if (genome.modality_count() != 1) {
        throw std::invalid_argument("concatenated routing needs a 1-modality genome");
      }
      widths = {kDataModalities * d};
      break;
    case Routing::kForcedEarly:
      widths.assign(genome.modality_count(), kDataModalities * d);
      break;
  }
  CompileOptions options;
  options.max_width = config_.max_width;
  ComputationGraph graph = Compile(genome, widths, data_.length, Vocabulary::Default(), options);
  network_ = std::make_unique<GraphNetwork<float>>(std::move(graph), &store_, "g");

  const int F = data_.continuous_features;
  categorical_table_ = store_.Add("emb.categorical", {data_.categorical_vocab, d},
                                  Init::kTruncatedNormal);
  notes_table_ = store_.Add("emb.notes", {data_.notes_vocab, d}, Init::kTruncatedNormal);
  continuous_w_ = store_.Add("emb.continuous.w", {2 * F, d}, Init::kTruncatedNormal);
  continuous_b_ = store_.Add("emb.continuous.b", {d}, Init::kZeros);
  Rescale(store_, categorical_table_, 1.0 / 0.02);
  Rescale(store_, notes_table_, 1.0 / 0.02);
  Rescale(store_, continuous_w_, 1.0 / (0.02 * std::sqrt(2.0 * F)));

  const int context = 1;
  head_w_ = store_.Add("head.w", {network_->graph().output_width() + context,
                                  data_.num_classes()},
                       Init::kTruncatedNormal);
  head_b_ = store_.Add("head.b", {data_.num_classes()}, Init::kZeros);

  for (int i = 0; i < store_.size(); ++i) {
    adam_m_.emplace_back(store_.at(i).value.shape());
    adam_v_.emplace_back(store_.at(i).value.shape());
  }
}

int FusionModel::Param(Tape<float>& tape, int index) {
  auto& e = store_.at(index);
  return tape.External(&e.value, e.trainable ? &e.grad : nullptr);
}

int FusionModel::Forward(Tape<float>& tape, const std::vector<const MultimodalExample*>& batch,
                         bool training) {
  using O = Ops<float>;
  const int B = static_cast<int>(batch.size());
  const int L = data_.length, F = data_.continuous_features;
  std::vector<std::vector<int>> cat_bags, note_bags;
  cat_bags.reserve(B * L);
  note_bags.reserve(B * L);
  Tensor<float> cont({B, L, 2 * F});
  Tensor<float> context({B, 1});
  for (int b = 0; b < B; ++b) {
    const MultimodalExample& ex = *batch[b];
    for (int t = 0; t < L; ++t) {
      cat_bags.push_back(ex.categorical[t]);
      note_bags.push_back(ex.notes[t]);
      for (int f = 0; f < F; ++f) {
        cont.at(b, t, f) = ex.continuous[t][f];
        cont.at(b, t, F + f) = ex.observed[t][f];
      }
    }
    context[b] = ex.context.empty() ? 0.0f : ex.context[0];
  }
  const int cat = O::EmbeddingBagMean(tape, Param(tape, categorical_table_), cat_bags, B, L);
  const int notes = O::EmbeddingBagMean(tape, Param(tape, notes_table_), note_bags, B, L);
  const int contv = O::Linear(tape, tape.Constant(std::move(cont)), Param(tape, continuous_w_),
                              Param(tape, continuous_b_));
  std::vector<int> inputs;
  switch (config_.routing) {
    case Routing::kPerModality:
      inputs = {cat, contv, notes};
      break;
    case Routing::kConcatenated:
    case Routing::kForcedEarly: {
      const int joined = O::Concat(tape, {cat, contv, notes});
      inputs.assign(network_->graph().modality_count(), joined);
      break;
    }
  }
  const int out = network_->Forward(tape, inputs, training);
  const int pooled = O::MeanOverTime(tape, out);
  const int features = O::Concat(tape, {pooled, tape.Constant(std::move(context))});
  return O::Linear(tape, features, Param(tape, head_w_), Param(tape, head_b_));
}

double FusionModel::TrainStep(const std::vector<const MultimodalExample*>& batch, double lr) {
  std::vector<int> labels;
  for (const auto* ex : batch) labels.push_back(ex->label);
  Tape<float> tape;
  const int logits = Forward(tape, batch, /*training=*/true);
  const int loss = Ops<float>::SoftmaxCrossEntropy(tape, logits, labels);
  const double value = tape.value(loss)[0];
  if (!std::isfinite(value)) return value;
  store_.ZeroGrad();
  tape.Backward(loss);

  ++updates_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(updates_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(updates_));
  for (int i = 0; i < store_.size(); ++i) {
    auto& e = store_.at(i);
    if (!e.trainable) continue;
    float* w = e.value.data();
    const float* g = e.grad.data();
    float* m = adam_m_[i].data();
    float* v = adam_v_[i].data();
    for (std::size_t j = 0; j < e.value.size(); ++j) {
      m[j] = static_cast<float>(b1 * m[j] + (1 - b1) * g[j]);
      v[j] = static_cast<float>(b2 * v[j] + (1 - b2) * g[j] * g[j]);
      const double mhat = m[j] / c1, vhat = v[j] / c2;
      w[j] = static_cast<float>(w[j] - lr * mhat / (std::sqrt(vhat) + config_.epsilon));
    }
  }
  return value;
}

Tensor<float> FusionModel::Logits(const std::vector<MultimodalExample>& examples) {
  const int K = data_.num_classes();
  Tensor<float> all({static_cast<int>(examples.size()), K});
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < examples.size(); start += kChunk) {
    std::vector<const MultimodalExample*> batch;
    for (std::size_t i = start; i < std::min(examples.size(), start + kChunk); ++i) {
      batch.push_back(&examples[i]);
    }
    Tape<float> tape;
    const Tensor<float>& logits = tape.value(Forward(tape, batch, /*training=*/false));
    std::copy(logits.data(), logits.data() + logits.size(), all.data() + start * K);
  }
  return all;
}

// ---------------------------------------------------------------------------
// EvaluateCandidate

bool FitnessResult::SameOutcome(const FitnessResult& o) const {
  return fitness == o.fitness && train_loss_curve == o.train_loss_curve &&
         rejected == o.rejected && reason == o.reason && parameter_count == o.parameter_count &&
         updates_applied == o.updates_applied;
}

namespace {

void WriteLog(std::ostream* log, const std::string& id, const FitnessResult& r, int steps) {
  if (log == nullptr) return;
  nlohmann::json j = {{"genome_id", id},       {"fitness", r.fitness},
                      {"steps", steps},        {"wall_time", r.wall_time},
                      {"rejected", r.rejected}, {"reason", r.reason},
                      {"parameters", r.parameter_count}};
  *log << j.dump() << "\n";
}

}  // namespace

FitnessResult EvaluateCandidate(const Genome& genome, const Dataset& data,
                                const TrainConfig& config, std::ostream* log,
                                const std::string& genome_id) {
  config.Validate();
  if (data.train.empty() || data.validation.empty()) {
    throw std::invalid_argument("dataset needs training and validation examples");
  }
  const auto start = std::chrono::steady_clock::now();
  FitnessResult result;
  auto finish = [&] {
    result.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    WriteLog(log, genome_id, result, config.steps);
    return result;
  };
  auto reject = [&](std::string reason) {
    result.rejected = true;
    result.fitness = 0.0;
    result.reason = std::move(reason);
    return finish();
  };

  // Budget check on the bare graph, before any parameter is allocated.
  {
    const int d = config.embedding_width;
    std::vector<int> widths(genome.modality_count(),
                            config.routing == Routing::kPerModality ? d : kDataModalities * d);
    CompileOptions options;
    options.max_width = config.max_width;
    ComputationGraph graph;
    try {
      graph = Compile(genome, widths, data.spec.length, Vocabulary::Default(), options);
    } catch (const CompileError& e) {
      return reject(std::string("compile error: ") + e.what());
    }
    result.parameter_count = graph.parameter_count;
    if (EnforceBudget(graph, config.budget) == BudgetDecision::kReject) {
      return reject("over budget");
    }
  }

  FusionModel model(genome, data.spec, config);
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<int> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  result.train_loss_curve.reserve(config.steps);
  for (int step = 0; step < config.steps; ++step) {
    std::vector<const MultimodalExample*> batch;
    while (static_cast<int>(batch.size()) < config.batch_size) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch.push_back(&data.train[order[cursor++]]);
    }
    const double loss = model.TrainStep(batch, LrAt(config, step));
    if (!std::isfinite(loss)) {
      result.updates_applied = model.updates_applied();
      return reject("diverged");
    }
    result.train_loss_curve.push_back(loss);
  }
  result.updates_applied = model.updates_applied();

  std::vector<int> labels;
  for (const auto& ex : data.validation) labels.push_back(ex.label);
  const Tensor<float> logits = model.Logits(data.validation);
  for (float v : logits.values()) {
    if (!std::isfinite(v)) return reject("diverged");
  }
  result.fitness = RecallAtK(logits, labels, config.recall_k);
  return finish();
}

}  // namespace fusearch
