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

// Search-field vocabularies for block encodings.
//
// Every branch picks a normalization, a layer, a relative output dimension and
// an activation; every block picks a combiner. Genes store indices into the
// lists below, so the order of entries is part of the on-disk format and is
// versioned by `Vocabulary::version`.

#ifndef FUSEARCH_VOCABULARY_H_
#define FUSEARCH_VOCABULARY_H_

#include <string>
#include <string_view>
#include <vector>

namespace fusearch {

enum class LayerKind {
  kConv,               // standard convolution s x 1
  kSeparableConv,      // depthwise separable convolution s x 1
  kLightweightConv,    // softmax-normalized depthwise conv with r kernel groups
  kAttention,          // n-head self attention
  kGatedLinearUnit,
  kMaxPool,
  kAvgPool,
  kIdentity,
  kDeadBranch,
};

enum class Activation { kRelu, kLeakyRelu, kSwish, kNone };
enum class Normalization { kLayerNorm, kBatchNorm, kNone };
enum class Combiner { kAdd, kConcat, kMul };

struct LayerSpec {
  LayerKind kind = LayerKind::kIdentity;
  int kernel = 1;     // conv / pool window
  int reduction = 1;  // lightweight conv kernel groups
  int heads = 1;      // attention
  std::string name;

  // True when the layer owns trainable weights.
  bool parameterized() const;
  // True when the relative output dimension field sets the output width;
  // otherwise the layer preserves its input width.
  bool uses_output_dim() const;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct Vocabulary {
  static constexpr int kVersion = 1;

  std::vector<LayerSpec> layers;
  std::vector<Activation> activations;
  std::vector<Normalization> normalizations;
  std::vector<Combiner> combiners;
  // Multipliers applied to the architecture's base width.
  std::vector<double> relative_output_dims;

  // The 29-entry layer table with relative dims {0.5, 1, 2, 4}.
  static const Vocabulary& Default();
  static Vocabulary WithOutputDims(std::vector<double> dims);

  int layer_count() const { return static_cast<int>(layers.size()); }
  int activation_count() const { return static_cast<int>(activations.size()); }
  int normalization_count() const {
    return static_cast<int>(normalizations.size());
  }
  int combiner_count() const { return static_cast<int>(combiners.size()); }
  int dim_count() const { return static_cast<int>(relative_output_dims.size()); }

  // Index lookups for seed construction. Throw std::invalid_argument when the
  // requested entry does not exist.
  int LayerIndex(LayerKind kind, int kernel = 0, int reduction = 0,
                 int heads = 0) const;
  int ActivationIndex(Activation a) const;
  int NormalizationIndex(Normalization n) const;
  int CombinerIndex(Combiner c) const;
  int DimIndex(double multiplier) const;
};

std::string_view ToString(Activation a);
std::string_view ToString(Normalization n);
std::string_view ToString(Combiner c);

}  // namespace fusearch

#endif  // FUSEARCH_VOCABULARY_H_
