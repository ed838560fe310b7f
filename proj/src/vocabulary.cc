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

#include "fusearch/vocabulary.h"

#include <cmath>
#include <stdexcept>

namespace fusearch {

bool LayerSpec::parameterized() const {
  switch (kind) {
    case LayerKind::kConv:
    case LayerKind::kSeparableConv:
    case LayerKind::kLightweightConv:
    case LayerKind::kAttention:
    case LayerKind::kGatedLinearUnit:
      return true;
    default:
      return false;
  }
}

bool LayerSpec::uses_output_dim() const {
  switch (kind) {
    case LayerKind::kConv:
    case LayerKind::kSeparableConv:
    case LayerKind::kAttention:
    case LayerKind::kGatedLinearUnit:
      return true;
    default:
      return false;
  }
}

namespace {

std::vector<LayerSpec> BuildLayers() {
  std::vector<LayerSpec> out;
  for (int s : {1, 3}) {
    out.push_back({LayerKind::kConv, s, 1, 1, "conv" + std::to_string(s) + "x1"});
  }
  for (int s : {3, 5, 7, 9, 11}) {
    out.push_back({LayerKind::kSeparableConv, s, 1, 1,
                   "sep_conv" + std::to_string(s) + "x1"});
  }
  for (int s : {3, 5, 7, 15}) {
    for (int r : {1, 4, 16}) {
      out.push_back({LayerKind::kLightweightConv, s, r, 1,
                     "light_conv" + std::to_string(s) + "x" + std::to_string(r)});
    }
  }
  for (int n : {4, 8, 16}) {
    out.push_back({LayerKind::kAttention, 1, 1, n,
                   "attention" + std::to_string(n) + "h"});
  }
  out.push_back({LayerKind::kGatedLinearUnit, 1, 1, 1, "glu"});
  for (int s : {3, 5}) {
    out.push_back({LayerKind::kMaxPool, s, 1, 1, "max_pool" + std::to_string(s) + "x1"});
  }
  for (int s : {3, 5}) {
    out.push_back({LayerKind::kAvgPool, s, 1, 1, "avg_pool" + std::to_string(s) + "x1"});
  }
  out.push_back({LayerKind::kIdentity, 1, 1, 1, "identity"});
  out.push_back({LayerKind::kDeadBranch, 1, 1, 1, "dead_branch"});
  return out;
}

}  // namespace

const Vocabulary& Vocabulary::Default() {
  static const Vocabulary* vocab =
      new Vocabulary(WithOutputDims({0.5, 1.0, 2.0, 4.0}));
  return *vocab;
}

Vocabulary Vocabulary::WithOutputDims(std::vector<double> dims) {
  if (dims.empty()) throw std::invalid_argument("relative output dims are empty");
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (!(dims[i] > 0.0)) {
      throw std::invalid_argument("relative output dims must be positive");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (dims[i] == dims[j]) {
        throw std::invalid_argument("duplicate relative output dim");
      }
    }
  }
  Vocabulary v;
  v.layers = BuildLayers();
  v.activations = {Activation::kRelu, Activation::kLeakyRelu, Activation::kSwish,
                   Activation::kNone};
  v.normalizations = {Normalization::kLayerNorm, Normalization::kBatchNorm,
                      Normalization::kNone};
  v.combiners = {Combiner::kAdd, Combiner::kConcat, Combiner::kMul};
  v.relative_output_dims = std::move(dims);
  return v;
}

int Vocabulary::LayerIndex(LayerKind kind, int kernel, int reduction,
                           int heads) const {
  for (int i = 0; i < layer_count(); ++i) {
    const LayerSpec& l = layers[i];
    if (l.kind != kind) continue;
    if (kernel != 0 && l.kernel != kernel) continue;
    if (reduction != 0 && l.reduction != reduction) continue;
    if (heads != 0 && l.heads != heads) continue;
    return i;
  }
  throw std::invalid_argument("no such layer in vocabulary");
}

int Vocabulary::ActivationIndex(Activation a) const {
  for (int i = 0; i < activation_count(); ++i) {
    if (activations[i] == a) return i;
  }
  throw std::invalid_argument("no such activation in vocabulary");
}

int Vocabulary::NormalizationIndex(Normalization n) const {
  for (int i = 0; i < normalization_count(); ++i) {
    if (normalizations[i] == n) return i;
  }
  throw std::invalid_argument("no such normalization in vocabulary");
}

int Vocabulary::CombinerIndex(Combiner c) const {
  for (int i = 0; i < combiner_count(); ++i) {
    if (combiners[i] == c) return i;
  }
  throw std::invalid_argument("no such combiner in vocabulary");
}

int Vocabulary::DimIndex(double multiplier) const {
  for (int i = 0; i < dim_count(); ++i) {
    if (std::abs(relative_output_dims[i] - multiplier) < 1e-12) return i;
  }
  throw std::invalid_argument("no such relative output dim in vocabulary");
}

std::string_view ToString(Activation a) {
  switch (a) {
    case Activation::kRelu: return "relu";
    case Activation::kLeakyRelu: return "leaky_relu";
    case Activation::kSwish: return "swish";
    case Activation::kNone: return "none";
  }
  return "?";
}

std::string_view ToString(Normalization n) {
  switch (n) {
    case Normalization::kLayerNorm: return "layer_norm";
    case Normalization::kBatchNorm: return "batch_norm";
    case Normalization::kNone: return "none";
  }
  return "?";
}

std::string_view ToString(Combiner c) {
  switch (c) {
    case Combiner::kAdd: return "add";
    case Combiner::kConcat: return "concat";
    case Combiner::kMul: return "mul";
  }
  return "?";
}

}  // namespace fusearch
