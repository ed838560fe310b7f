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

// Central finite-difference checks against the tape's analytic gradients.
// The loss is sum(y * R) for a fixed random R so that every output element
// carries a distinct weight.

#ifndef FUSEARCH_TESTS_GRADCHECK_H_
#define FUSEARCH_TESTS_GRADCHECK_H_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "fusearch/autodiff.h"
#include "fusearch/executor.h"
#include "fusearch/genome.h"
#include "fusearch/graph.h"
#include "fusearch/parameters.h"

namespace fusearch::testing {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst;
  int checked = 0;
};

inline double RelativeError(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), 1e-3});
}

inline Tensor<double> RandomTensor(std::vector<int> shape, std::mt19937_64& rng,
                                   double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  std::normal_distribution<double> normal(0.0, scale);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = normal(rng);
  return t;
}

using OpFn = std::function<int(Tape<double>&, const std::vector<int>&)>;

// Checks d loss / d inputs for an op built by `f` from Variable leaves.
inline GradCheckResult CheckOp(const OpFn& f, std::vector<Tensor<double>> inputs,
                               std::uint64_t seed, double step = 1e-5) {
  std::mt19937_64 rng(seed);
  Tensor<double> weights;
  auto loss_of = [&](Tape<double>& tape, std::vector<int>* ids) {
    std::vector<int> local;
    for (const auto& in : inputs) local.push_back(tape.Variable(in));
    const int y = f(tape, local);
    if (weights.empty()) weights = RandomTensor(tape.value(y).shape(), rng);
    const int loss = Ops<double>::Sum(
        tape, Ops<double>::Mul(tape, y, tape.Constant(weights)));
    if (ids) *ids = local;
    return loss;
  };
  Tape<double> tape;
  std::vector<int> ids;
  const int loss = loss_of(tape, &ids);
  tape.Backward(loss);

  GradCheckResult r;
  for (std::size_t a = 0; a < inputs.size(); ++a) {
    for (std::size_t i = 0; i < inputs[a].size(); ++i) {
      const double analytic = tape.has_grad(ids[a]) ? tape.grad(ids[a])[i] : 0.0;
      const double saved = inputs[a][i];
      inputs[a][i] = saved + step;
      Tape<double> plus;
      const double fp = plus.value(loss_of(plus, nullptr))[0];
      inputs[a][i] = saved - step;
      Tape<double> minus;
      const double fm = minus.value(loss_of(minus, nullptr))[0];
      inputs[a][i] = saved;
      const double err = RelativeError(analytic, (fp - fm) / (2 * step));
      ++r.checked;
      if (err > r.max_relative_error) {
        r.max_relative_error = err;
        r.worst = "input " + std::to_string(a) + "[" + std::to_string(i) + "]";
      }
    }
  }
  return r;
}

// Checks gradients of a compiled graph with respect to its inputs and every
// trainable parameter.
inline GradCheckResult CheckGraph(const ComputationGraph& graph, int batch,
                                  std::uint64_t seed, bool training = true,
                                  double step = 1e-5) {
  std::mt19937_64 rng(seed);
  ParameterStore<double> store(seed);
  GraphNetwork<double> net(graph, &store);
  // Perturb initial values so gradients are not dominated by the small init.
  for (int i = 0; i < store.size(); ++i) {
    auto& e = store.at(i);
    if (!e.trainable) continue;
    for (std::size_t j = 0; j < e.value.size(); ++j) {
      e.value[j] += std::normal_distribution<double>(0.0, 0.3)(rng);
    }
  }
  std::vector<Tensor<double>> inputs;
  for (int w : graph.input_widths) inputs.push_back(RandomTensor({batch, graph.length, w}, rng));
  const Tensor<double> weights =
      RandomTensor({batch, graph.length, graph.output_width()}, rng);

  // Batch-norm running statistics change on every training forward; restore
  // them so each evaluation sees the same state.
  std::vector<Tensor<double>> buffers;
  for (int i = 0; i < store.size(); ++i) buffers.push_back(store.at(i).value);
  auto restore_buffers = [&] {
    for (int i = 0; i < store.size(); ++i) {
      if (!store.at(i).trainable) store.at(i).value = buffers[i];
    }
  };

  auto run = [&](Tape<double>& tape, std::vector<int>* ids) {
    restore_buffers();
    std::vector<int> local;
    for (const auto& in : inputs) local.push_back(tape.Variable(in));
    const int y = net.Forward(tape, local, training);
    const int loss = Ops<double>::Sum(
        tape, Ops<double>::Mul(tape, y, tape.Constant(weights)));
    if (ids) *ids = local;
    return loss;
  };
  auto numeric = [&](double& slot) {
    const double saved = slot;
    slot = saved + step;
    Tape<double> plus;
    const double fp = plus.value(run(plus, nullptr))[0];
    slot = saved - step;
    Tape<double> minus;
    const double fm = minus.value(run(minus, nullptr))[0];
    slot = saved;
    return (fp - fm) / (2 * step);
  };

  store.ZeroGrad();
  Tape<double> tape;
  std::vector<int> ids;
  const int loss = run(tape, &ids);
  tape.Backward(loss);

  GradCheckResult r;
  auto record = [&](double analytic, double num, const std::string& where) {
    const double err = RelativeError(analytic, num);
    ++r.checked;
    if (err > r.max_relative_error) {
      r.max_relative_error = err;
      r.worst = where;
    }
  };
  for (std::size_t m = 0; m < inputs.size(); ++m) {
    for (std::size_t i = 0; i < inputs[m].size(); ++i) {
      const double analytic = tape.has_grad(ids[m]) ? tape.grad(ids[m])[i] : 0.0;
      record(analytic, numeric(inputs[m][i]),
             "input " + std::to_string(m) + "[" + std::to_string(i) + "]");
    }
  }
  for (int p = 0; p < store.size(); ++p) {
    auto& e = store.at(p);
    if (!e.trainable) continue;
    const Tensor<double> analytic = e.grad;
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      record(analytic[i], numeric(e.value[i]), e.name + "[" + std::to_string(i) + "]");
    }
  }
  return r;
}

// One-block single-modality genome exercising the given branch choices; the
// right branch is dead unless `right_layer` is given.
inline Genome SingleBranchGenome(int norm, int layer, int dim, int act,
                                 const Vocabulary& v = Vocabulary::Default()) {
  const BlockGene b{{0, norm, layer, dim, act},
                    {0, v.NormalizationIndex(Normalization::kNone),
                     v.LayerIndex(LayerKind::kDeadBranch), 0,
                     v.ActivationIndex(Activation::kNone)},
                    v.CombinerIndex(Combiner::kAdd)};
  return Genome({{}}, {b});
}

}  // namespace fusearch::testing

#endif  // FUSEARCH_TESTS_GRADCHECK_H_
