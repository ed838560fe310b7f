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

#ifndef FUSEARCH_SEARCH_SPACE_H_
#define FUSEARCH_SEARCH_SPACE_H_

#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "fusearch/genome.h"
#include "fusearch/vocabulary.h"

namespace fusearch {

enum class FusionKind { kEarly, kHybrid, kLate };

std::string_view ToString(FusionKind kind);
// Throws std::invalid_argument for anything but early/hybrid/late.
FusionKind ParseFusionKind(std::string_view name);

struct SeedOptions {
  int attention_heads = 4;
  // Pass-through blocks placed at the front of the fusion architecture. The
  // unimodal baseline uses 2 so that its block count matches the 8-block
  // reference layout.
  int leading_pass_through = 0;
};

// Transformer seeds. Each Transformer layer takes three blocks:
//   1. x + attention(layer_norm(x))
//   2. relu(conv1x1(layer_norm(h), 4x))            (right branch dead)
//   3. conv1x1(h2, 1x) + h
// Every seed has a maximum depth of two Transformer layers:
//   early:  no modality blocks; fusion = (M-1) concatenations + 2 layers
//   hybrid: 1 layer per modality; fusion = (M-1) concatenations + 1 layer
//   late:   2 layers per modality; no fusion blocks (outputs meet at the
//           model output)
Genome SeedGenome(FusionKind kind, int modalities, const SeedOptions& options = {},
                  const Vocabulary& vocab = Vocabulary::Default());

// Single-architecture baseline over pre-concatenated inputs: one modality
// slot, no modality blocks, 2 pass-through blocks and 2 Transformer layers.
Genome UnimodalSeedGenome(const SeedOptions& options = {},
                          const Vocabulary& vocab = Vocabulary::Default());

// Number of legal values for field `field_in_block` of block `ref`.
int FieldChoices(const GenomeLayout& layout, BlockRef ref, int field_in_block,
                 const Vocabulary& vocab = Vocabulary::Default());

struct MutationRecord {
  // Linearized positions selected for mutation (Bernoulli(rate) each).
  std::vector<int> flipped;
  // Subset of `flipped` whose value actually changed. A selected field with a
  // single legal value cannot change.
  std::vector<int> changed;
};

// Each linearized field is selected independently with probability `rate`; a
// selected field is resampled uniformly from its legal values excluding the
// current one. Input fields resample within the block's legal range, so the
// result validates whenever the input does. The returned genome keeps the seed
// name and increments the generation.
Genome Mutate(const Genome& genome, double rate, std::mt19937_64& rng,
              MutationRecord* record = nullptr,
              const Vocabulary& vocab = Vocabulary::Default());

using BigInt = boost::multiprecision::cpp_int;

// Per-block count of legal inputs for each branch.
struct BlockSlot {
  int left_inputs = 1;
  int right_inputs = 1;
};

std::vector<BlockSlot> SlotsFor(const GenomeLayout& layout);

// Product over blocks of
//   combiners * prod_{branch} (inputs * norms * layers * dims * activations).
BigInt Cardinality(const std::vector<BlockSlot>& slots,
                   const Vocabulary& vocab = Vocabulary::Default());
BigInt Cardinality(const GenomeLayout& layout,
                   const Vocabulary& vocab = Vocabulary::Default());

}  // namespace fusearch

#endif  // FUSEARCH_SEARCH_SPACE_H_
