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

#include "fusearch/executor.h"

#include <algorithm>
#include <cmath>

namespace fusearch {

template <typename T>
Tensor<T> PositionSignal(int length, int width) {
  Tensor<T> pe({length, width});
  for (int t = 0; t < length; ++t) {
    for (int c = 0; c < width; ++c) {
      const double freq = std::pow(10000.0, -static_cast<double>(c - c % 2) / width);
      const double angle = t * freq;
      pe[static_cast<std::size_t>(t) * width + c] =
          static_cast<T>(c % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

template <typename T>
GraphNetwork<T>::GraphNetwork(ComputationGraph graph, ParameterStore<T>* store,
                              std::string prefix)
    : graph_(std::move(graph)), store_(store) {
  node_params_.resize(graph_.nodes.size());
  const std::int64_t before = store_->TrainableScalarCount();
  for (const NodeSpec& n : graph_.nodes) {
    std::vector<int>& p = node_params_[n.id];
    const std::string base = prefix + ".n" + std::to_string(n.id) + ".";
    auto add = [&](const std::string& part, std::vector<int> shape, Init init) {
      p.push_back(store_->Add(base + part, std::move(shape), init));
    };
    const int in = n.input_width, out = n.width;
    if (n.kind == NodeKind::kNormalization) {
      add("gamma", {out}, Init::kOnes);
      add("beta", {out}, Init::kZeros);
      if (n.normalization == Normalization::kBatchNorm) {
        p.push_back(store_->AddBuffer(base + "mean", Tensor<T>({out})));
        p.push_back(store_->AddBuffer(base + "var", Tensor<T>({out}, T(1))));
      }
      continue;
    }
    if (n.kind != NodeKind::kLayer) continue;
    const LayerSpec& l = n.layer;
    switch (l.kind) {
      case LayerKind::kConv:
        add("w", {l.kernel, in, out}, Init::kTruncatedNormal);
        add("b", {out}, Init::kZeros);
        break;
      case LayerKind::kSeparableConv:
        add("dw", {l.kernel, in}, Init::kTruncatedNormal);
        add("pw", {in, out}, Init::kTruncatedNormal);
        add("b", {out}, Init::kZeros);
        break;
      case LayerKind::kLightweightConv:
        add("w", {std::min(l.reduction, in), l.kernel}, Init::kTruncatedNormal);
        break;
      case LayerKind::kAttention:
        for (const char* part : {"q", "k", "v"}) {
          add(std::string("w") + part, {in, n.inner_width}, Init::kTruncatedNormal);
          add(std::string("b") + part, {n.inner_width}, Init::kZeros);
        }
        add("wo", {n.inner_width, out}, Init::kTruncatedNormal);
        add("bo", {out}, Init::kZeros);
        break;
      case LayerKind::kGatedLinearUnit:
        add("w1", {in, out}, Init::kTruncatedNormal);
        add("b1", {out}, Init::kZeros);
        add("w2", {in, out}, Init::kTruncatedNormal);
        add("b2", {out}, Init::kZeros);
        break;
      default:
        break;
    }
  }
  parameter_count_ = store_->TrainableScalarCount() - before;
}

template <typename T>
int GraphNetwork<T>::Param(Tape<T>& tape, int store_index) const {
  auto& e = store_->at(store_index);
  return tape.External(&e.value, e.trainable ? &e.grad : nullptr);
}

template <typename T>
int GraphNetwork<T>::Forward(Tape<T>& tape, const std::vector<int>& inputs, bool training) {
  using O = Ops<T>;
  if (static_cast<int>(inputs.size()) != graph_.modality_count()) {
    throw ContractViolation("expected " + std::to_string(graph_.modality_count()) +
                            " modality inputs, got " + std::to_string(inputs.size()));
  }
  std::vector<int> at(graph_.nodes.size(), -1);
  for (const NodeSpec& n : graph_.nodes) {
    const std::vector<int>& p = node_params_[n.id];
    auto pred = [&](int i) { return at[n.predecessors.at(i)]; };
    auto fail = [&](const std::string& what) {
      throw ContractViolation("node " + std::to_string(n.id) + ": " + what);
    };
    int y = -1;
    try {
      switch (n.kind) {
        case NodeKind::kEmbeddingInput: {
          const int x = inputs[n.modality];
          const Tensor<T>& xv = tape.value(x);
          if (xv.rank() != 3 || xv.dim(1) != graph_.length || xv.dim(2) != n.width) {
            fail("input shape " + Tensor<T>::ShapeString(xv.shape()) + " does not match (B, " +
                 std::to_string(graph_.length) + ", " + std::to_string(n.width) + ")");
          }
          if (!positional_signal) {
            y = x;
            break;
          }
          const int B = xv.dim(0);
          const Tensor<T> pe = PositionSignal<T>(graph_.length, n.width);
          Tensor<T> tiled({B, graph_.length, n.width});
          for (int b = 0; b < B; ++b) {
            std::copy(pe.values().begin(), pe.values().end(),
                      tiled.values().begin() + static_cast<std::ptrdiff_t>(b) * pe.size());
          }
          y = O::Add(tape, x, tape.Constant(std::move(tiled)));
          break;
        }
        case NodeKind::kNormalization:
          if (n.normalization == Normalization::kLayerNorm) {
            y = O::LayerNorm(tape, pred(0), Param(tape, p[0]), Param(tape, p[1]));
          } else {
            y = O::BatchNorm(tape, pred(0), Param(tape, p[0]), Param(tape, p[1]),
                             &store_->at(p[2]).value, &store_->at(p[3]).value, training);
          }
          break;
        case NodeKind::kLayer: {
          const int x = pred(0);
          const LayerSpec& l = n.layer;
          switch (l.kind) {
            case LayerKind::kConv:
              y = O::CausalConv(tape, x, Param(tape, p[0]), Param(tape, p[1]));
              break;
            case LayerKind::kSeparableConv:
              y = O::DepthwiseCausalConv(tape, x, Param(tape, p[0]));
              y = O::Linear(tape, y, Param(tape, p[1]), Param(tape, p[2]));
              break;
            case LayerKind::kLightweightConv:
              y = O::LightweightConv(tape, x, Param(tape, p[0]));
              break;
            case LayerKind::kAttention: {
              const int q = O::Linear(tape, x, Param(tape, p[0]), Param(tape, p[1]));
              const int k = O::Linear(tape, x, Param(tape, p[2]), Param(tape, p[3]));
              const int v = O::Linear(tape, x, Param(tape, p[4]), Param(tape, p[5]));
              y = O::Attention(tape, q, k, v, l.heads);
              y = O::Linear(tape, y, Param(tape, p[6]), Param(tape, p[7]));
              break;
            }
            case LayerKind::kGatedLinearUnit: {
              const int a = O::Linear(tape, x, Param(tape, p[0]), Param(tape, p[1]));
              const int g = O::Linear(tape, x, Param(tape, p[2]), Param(tape, p[3]));
              y = O::Mul(tape, a, O::Sigmoid(tape, g));
              break;
            }
            case LayerKind::kMaxPool:
              y = O::Pool(tape, x, l.kernel, PoolKind::kMax);
              break;
            case LayerKind::kAvgPool:
              y = O::Pool(tape, x, l.kernel, PoolKind::kAverage);
              break;
            case LayerKind::kIdentity:
            case LayerKind::kDeadBranch:
              fail("identity and dead-branch layers are not graph nodes");
          }
          break;
        }
        case NodeKind::kActivation:
          switch (n.activation) {
            case Activation::kRelu: y = O::Relu(tape, pred(0)); break;
            case Activation::kLeakyRelu: y = O::LeakyRelu(tape, pred(0)); break;
            case Activation::kSwish: y = O::Swish(tape, pred(0)); break;
            case Activation::kNone: y = pred(0); break;
          }
          break;
        case NodeKind::kCombiner:
          if (n.predecessors.size() == 1) {
            y = pred(0);
          } else if (n.combiner == Combiner::kAdd) {
            y = O::Add(tape, pred(0), pred(1));
          } else if (n.combiner == Combiner::kMul) {
            y = O::Mul(tape, pred(0), pred(1));
          } else {
            y = O::Concat(tape, {pred(0), pred(1)});
          }
          break;
        case NodeKind::kOutput: {
          std::vector<int> parts;
          for (int q : n.predecessors) parts.push_back(at[q]);
          y = parts.size() == 1 ? parts[0] : O::Concat(tape, parts);
          break;
        }
      }
    } catch (const ContractViolation& e) {
      const std::string what = e.what();
      if (what.rfind("node ", 0) == 0) throw;
      fail(what);
    }
    const Tensor<T>& yv = tape.value(y);
    if (yv.rank() != 3 || yv.dim(1) != graph_.length || yv.dim(2) != n.width) {
      fail("produced shape " + Tensor<T>::ShapeString(yv.shape()) + ", expected width " +
           std::to_string(n.width));
    }
    at[n.id] = y;
  }
  return at[graph_.outputs.at(0)];
}

template Tensor<float> PositionSignal<float>(int, int);
template Tensor<double> PositionSignal<double>(int, int);
template class GraphNetwork<float>;
template class GraphNetwork<double>;

}  // namespace fusearch
