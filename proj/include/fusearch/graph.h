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

// Compilation of genomes into typed computation DAGs.
//
// Per branch the node order is normalization -> layer -> activation. Identity
// layers and "none" normalizations/activations emit no node. Every block emits
// exactly one combiner node, which has two predecessors, or one when a branch
// is dead (the surviving branch passes through unchanged; with both branches
// dead the block forwards its left input).
//
// Widths:
//   * relative output dims scale the architecture's base width (the modality
//     embedding width, or the sum of all embedding widths for the fusion
//     architecture): round(multiplier * base), at least 1. Only convolutions,
//     separable convolutions, attention and GLU change width; lightweight
//     convolutions, pooling and identity keep their input width.
//   * add / mul combiners zero-pad the narrower operand on the channel axis;
//     concat sums widths.
//   * attention uses an inner width rounded up to a multiple of the head
//     count (head dim = inner / heads).
//
// States that no block consumes are concatenated, in state order, into a
// single output node.

#ifndef FUSEARCH_GRAPH_H_
#define FUSEARCH_GRAPH_H_

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "fusearch/genome.h"
#include "fusearch/search_space.h"
#include "fusearch/vocabulary.h"

namespace fusearch {

enum class NodeKind { kEmbeddingInput, kNormalization, kLayer, kActivation,
                      kCombiner, kOutput };

std::string_view ToString(NodeKind kind);

struct ModalityTag {
  enum class Kind { kModality, kFusion, kMixed };
  Kind kind = Kind::kMixed;
  int modality = -1;  // valid for kModality

  friend bool operator==(const ModalityTag&, const ModalityTag&) = default;
};

struct NodeSpec {
  int id = 0;
  NodeKind kind = NodeKind::kLayer;
  std::vector<int> predecessors;
  ModalityTag tag;

  int width = 0;        // output channels
  int input_width = 0;  // width of the first predecessor (0 for inputs)
  int inner_width = 0;  // attention only
  int length = 0;       // sequence axis

  // Operation detail; which field is meaningful depends on `kind`.
  LayerSpec layer;
  Normalization normalization = Normalization::kNone;
  Activation activation = Activation::kNone;
  Combiner combiner = Combiner::kAdd;
  int modality = -1;  // embedding inputs

  // Global state index this node materializes, or -1.
  int state = -1;

  friend bool operator==(const NodeSpec&, const NodeSpec&) = default;
};

// Default width cap; compile fails above it.
inline constexpr int kDefaultMaxWidth = 1 << 16;

struct ComputationGraph {
  std::vector<NodeSpec> nodes;
  std::vector<int> outputs;          // exactly one id after orphan resolution
  std::vector<int> input_nodes;      // embedding input node per modality
  std::vector<int> input_widths;     // per modality
  int length = 0;
  std::int64_t parameter_count = 0;

  const NodeSpec& output() const { return nodes.at(outputs.at(0)); }
  int output_width() const { return output().width; }
  int modality_count() const { return static_cast<int>(input_widths.size()); }

  friend bool operator==(const ComputationGraph&, const ComputationGraph&) = default;
};

struct CompileOptions {
  int max_width = kDefaultMaxWidth;
};

// Requires Validate(genome) to be empty, one width per modality, all widths and
// the length positive. Throws CompileError on width overflow and
// std::invalid_argument on bad arguments.
ComputationGraph Compile(const Genome& genome, const std::vector<int>& widths,
                         int length, const Vocabulary& vocab = Vocabulary::Default(),
                         const CompileOptions& options = {});

// Trainable scalars owned by one node.
std::int64_t NodeParameterCount(const NodeSpec& node);
std::int64_t CountParameters(const ComputationGraph& graph);

enum class BudgetDecision { kAccept, kReject };
// Reject iff the parameter count exceeds the budget.
BudgetDecision EnforceBudget(const ComputationGraph& graph, std::int64_t budget);

struct FusionReport {
  std::vector<std::set<FusionKind>> per_modality;
  std::vector<bool> disconnected;  // no path from the embedding to the output
};

// Fusion strategy per modality. Modality m's signal is tracked from its
// embedding towards the output. A node "joins" when its sources include another
// modality (with a single modality: on entering the fusion architecture). A
// "transform" is a layer node with trainable weights. Operands of a combiner
// merge, so x + attention(x) counts as transformed. Each operand of the output
// node is classified separately:
//   late:   never joined before the output, or no transform after the join;
//   early:  transformed only after the join;
//   hybrid: transformed both before and after the join.
FusionReport ClassifyFusion(const ComputationGraph& graph);

// Graphviz text. Fill color encodes the modality tag, border color the node
// kind. Deterministic for a given graph.
std::string ToDot(const ComputationGraph& graph, const std::string& name = "fusearch");

// Structured graph file: JSON node list + edges, versioned.
std::string ToGraphJson(const ComputationGraph& graph);

}  // namespace fusearch

#endif  // FUSEARCH_GRAPH_H_
