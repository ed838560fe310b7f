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

// Gene encoding of a multimodal architecture.
//
// A genome holds one block list per modality plus one block list for the
// fusion architecture. Hidden states are numbered globally:
//
//   [modality 0: embedding, block 0, ..., block B0-1]
//   [modality 1: embedding, block 0, ...]
//   ...
//   [fusion: block 0, block 1, ...]
//
// A modality block may only read earlier states of its own modality. A fusion
// block may read any modality state and any earlier fusion state.

#ifndef FUSEARCH_GENOME_H_
#define FUSEARCH_GENOME_H_

#include <cstdint>
#include <string>
#include <vector>

#include "fusearch/vocabulary.h"

namespace fusearch {

struct BranchGene {
  int input = 0;
  int normalization = 0;
  int layer = 0;
  int output_dim = 0;
  int activation = 0;

  friend bool operator==(const BranchGene&, const BranchGene&) = default;
};

struct BlockGene {
  BranchGene left;
  BranchGene right;
  int combiner = 0;

  static constexpr int kFieldCount = 11;

  friend bool operator==(const BlockGene&, const BlockGene&) = default;
};

// Which field of a block a linearized position refers to.
enum class FieldKind { kInput, kNormalization, kLayer, kOutputDim, kActivation,
                       kCombiner };
FieldKind FieldKindAt(int field_in_block);

// Identifies a block: `architecture` is a modality index, or kFusion.
struct BlockRef {
  static constexpr int kFusion = -1;
  int architecture = kFusion;
  int block = 0;
};

// Block counts per architecture. Determines the legal input ranges.
struct GenomeLayout {
  std::vector<int> modality_blocks;
  int fusion_blocks = 0;

  int modality_count() const { return static_cast<int>(modality_blocks.size()); }
  int total_blocks() const;
  int field_count() const { return BlockGene::kFieldCount * total_blocks(); }
  // Number of states owned by modality architectures: sum of (blocks + 1).
  int modality_state_count() const;
  // Global index of modality m's embedding state.
  int modality_offset(int m) const;
  // Global index of the state produced by `ref`.
  int output_state(BlockRef ref) const;
  int state_count() const { return modality_state_count() + fusion_blocks; }
  // Legal input indices for a block are [first_input, first_input + count).
  int first_input(BlockRef ref) const;
  int input_choices(BlockRef ref) const;
  // Owning architecture of a global state index (modality index or kFusion).
  int architecture_of_state(int state) const;
  // Blocks in linearized order: modality 0..M-1, then fusion.
  std::vector<BlockRef> blocks() const;

  friend bool operator==(const GenomeLayout&, const GenomeLayout&) = default;
};

class Genome {
 public:
  Genome() = default;
  Genome(std::vector<std::vector<BlockGene>> modality_blocks,
         std::vector<BlockGene> fusion_blocks, std::string seed_name = "",
         int generation = 0);

  const std::vector<std::vector<BlockGene>>& modality_blocks() const {
    return modality_blocks_;
  }
  const std::vector<BlockGene>& fusion_blocks() const { return fusion_blocks_; }
  const std::string& seed_name() const { return seed_name_; }
  int generation() const { return generation_; }
  int modality_count() const { return static_cast<int>(modality_blocks_.size()); }

  GenomeLayout layout() const;
  const BlockGene& block(BlockRef ref) const;

  // Flat field list in linearized block order, 11 fields per block.
  std::vector<int> Encode() const;
  static Genome Decode(const GenomeLayout& layout, const std::vector<int>& fields,
                       std::string seed_name = "", int generation = 0);

  Genome WithMetadata(std::string seed_name, int generation) const;

  // Genes only; metadata is ignored.
  bool SameGenes(const Genome& other) const {
    return modality_blocks_ == other.modality_blocks_ &&
           fusion_blocks_ == other.fusion_blocks_;
  }

  friend bool operator==(const Genome&, const Genome&) = default;

 private:
  std::vector<std::vector<BlockGene>> modality_blocks_;
  std::vector<BlockGene> fusion_blocks_;
  std::string seed_name_;
  int generation_ = 0;
};

struct Violation {
  enum class Kind {
    kOutOfRange,       // vocabulary index outside its list
    kCrossModality,    // modality block reads another modality's state
    kForwardReference, // block reads a state not yet produced
    kNoSuchState,      // index beyond every state
  };
  Kind kind;
  BlockRef where;
  std::string message;
};

// Every violated constraint; empty iff the genome is legal.
std::vector<Violation> Validate(const Genome& genome,
                                const Vocabulary& vocab = Vocabulary::Default());

// Key-value tree text. Round-trips bit-exactly.
std::string Serialize(const Genome& genome,
                      const Vocabulary& vocab = Vocabulary::Default());
// Throws FormatError on malformed text or a vocabulary version mismatch. The
// recorded relative output dims are returned through `output_dims` if given.
Genome Deserialize(const std::string& text,
                   std::vector<double>* output_dims = nullptr);

// Stable 64-bit fingerprint of the gene fields (FNV-1a).
std::uint64_t Fingerprint(const Genome& genome);

}  // namespace fusearch

#endif  // FUSEARCH_GENOME_H_
