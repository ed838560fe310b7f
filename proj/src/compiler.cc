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

#include <cmath>
#include <optional>
#include <stdexcept>

#include "fusearch/errors.h"
#include "fusearch/graph.h"

namespace fusearch {

std::string_view ToString(NodeKind kind) {
  switch (kind) {
    case NodeKind::kEmbeddingInput: return "input";
    case NodeKind::kNormalization: return "normalization";
    case NodeKind::kLayer: return "layer";
    case NodeKind::kActivation: return "activation";
    case NodeKind::kCombiner: return "combiner";
    case NodeKind::kOutput: return "output";
  }
  return "?";
}

namespace {

struct Port {
  int node;
  int width;
};

class GraphBuilder {
 public:
  GraphBuilder(const Vocabulary& vocab, int length, const CompileOptions& options)
      : vocab_(vocab), length_(length), options_(options) {}

  ComputationGraph& graph() { return graph_; }

  int Add(NodeSpec node) {
    node.id = static_cast<int>(graph_.nodes.size());
    node.length = length_;
    for (int p : node.predecessors) {
      if (p < 0 || p >= node.id) {
        throw std::logic_error("internal error: non-topological predecessor");
      }
    }
    if (!node.predecessors.empty()) {
      node.input_width = graph_.nodes[node.predecessors.front()].width;
    }
    if (node.width <= 0) {
      throw CompileError("node " + std::to_string(node.id) + " has empty width");
    }
    if (node.width > options_.max_width || node.inner_width > options_.max_width) {
      throw CompileError("node " + std::to_string(node.id) + " width " +
                         std::to_string(node.width) + " exceeds maximum " +
                         std::to_string(options_.max_width));
    }
    graph_.nodes.push_back(std::move(node));
    return graph_.nodes.back().id;
  }

  // Returns nullopt for a dead branch.
  std::optional<Port> Branch(const BranchGene& gene, Port in, int base_width,
                             ModalityTag tag) {
    const LayerSpec& layer = vocab_.layers.at(gene.layer);
    if (layer.kind == LayerKind::kDeadBranch) return std::nullopt;
    Port cur = in;

    const Normalization norm = vocab_.normalizations.at(gene.normalization);
    if (norm != Normalization::kNone) {
      NodeSpec n;
      n.kind = NodeKind::kNormalization;
      n.normalization = norm;
      n.predecessors = {cur.node};
      n.tag = tag;
      n.width = cur.width;
      cur = {Add(std::move(n)), cur.width};
    }

    if (layer.kind != LayerKind::kIdentity) {
      NodeSpec n;
      n.kind = NodeKind::kLayer;
      n.layer = layer;
      n.predecessors = {cur.node};
      n.tag = tag;
      if (layer.uses_output_dim()) {
        const double mult = vocab_.relative_output_dims.at(gene.output_dim);
        const double scaled = std::round(mult * base_width);
        if (scaled > options_.max_width) {
          throw CompileError("relative width " + std::to_string(scaled) +
                             " exceeds maximum " +
                             std::to_string(options_.max_width));
        }
        n.width = std::max(1, static_cast<int>(scaled));
      } else {
        n.width = cur.width;
      }
      if (layer.kind == LayerKind::kAttention) {
        const int h = layer.heads;
        n.inner_width = (cur.width + h - 1) / h * h;
      }
      const int w = n.width;
      cur = {Add(std::move(n)), w};
    }

    const Activation act = vocab_.activations.at(gene.activation);
    if (act != Activation::kNone) {
      NodeSpec n;
      n.kind = NodeKind::kActivation;
      n.activation = act;
      n.predecessors = {cur.node};
      n.tag = tag;
      n.width = cur.width;
      cur = {Add(std::move(n)), cur.width};
    }
    return cur;
  }

  Port Block(const BlockGene& gene, const std::vector<Port>& states,
             int base_width, ModalityTag tag, int out_state,
             std::vector<bool>& consumed) {
    const auto left = Branch(gene.left, states.at(gene.left.input), base_width, tag);
    const auto right =
        Branch(gene.right, states.at(gene.right.input), base_width, tag);
    NodeSpec n;
    n.kind = NodeKind::kCombiner;
    n.combiner = vocab_.combiners.at(gene.combiner);
    n.tag = tag;
    n.state = out_state;
    if (left && right) {
      consumed[gene.left.input] = consumed[gene.right.input] = true;
      n.predecessors = {left->node, right->node};
      n.width = n.combiner == Combiner::kConcat ? left->width + right->width
                                                : std::max(left->width, right->width);
    } else if (left || right) {
      const Port p = left ? *left : *right;
      consumed[left ? gene.left.input : gene.right.input] = true;
      n.predecessors = {p.node};
      n.width = p.width;
    } else {
      const Port p = states.at(gene.left.input);
      consumed[gene.left.input] = true;
      n.predecessors = {p.node};
      n.width = p.width;
    }
    const int w = n.width;
    return {Add(std::move(n)), w};
  }

 private:
  const Vocabulary& vocab_;
  int length_;
  CompileOptions options_;
  ComputationGraph graph_;
};

}  // namespace

ComputationGraph Compile(const Genome& genome, const std::vector<int>& widths,
                         int length, const Vocabulary& vocab,
                         const CompileOptions& options) {
  if (static_cast<int>(widths.size()) != genome.modality_count()) {
    throw std::invalid_argument("need one input width per modality");
  }
  if (length <= 0) throw std::invalid_argument("sequence length must be positive");
  for (int w : widths) {
    if (w <= 0) throw std::invalid_argument("input widths must be positive");
  }
  if (const auto violations = Validate(genome, vocab); !violations.empty()) {
    throw std::invalid_argument("cannot compile invalid genome: " +
                                violations.front().message);
  }

  const GenomeLayout layout = genome.layout();
  GraphBuilder builder(vocab, length, options);
  std::vector<Port> states;
  states.reserve(layout.state_count());
  std::vector<bool> consumed(layout.state_count(), false);

  int fusion_base = 0;
  for (int m = 0; m < genome.modality_count(); ++m) {
    fusion_base += widths[m];
    const ModalityTag tag{ModalityTag::Kind::kModality, m};
    NodeSpec in;
    in.kind = NodeKind::kEmbeddingInput;
    in.modality = m;
    in.tag = tag;
    in.width = widths[m];
    in.state = static_cast<int>(states.size());
    const int id = builder.Add(std::move(in));
    builder.graph().input_nodes.push_back(id);
    states.push_back({id, widths[m]});
    for (int b = 0; b < layout.modality_blocks[m]; ++b) {
      const int out_state = static_cast<int>(states.size());
      states.push_back(builder.Block(genome.modality_blocks()[m][b], states,
                                     widths[m], tag, out_state, consumed));
    }
  }
  const ModalityTag fusion_tag{ModalityTag::Kind::kFusion, -1};
  for (const BlockGene& b : genome.fusion_blocks()) {
    const int out_state = static_cast<int>(states.size());
    states.push_back(
        builder.Block(b, states, fusion_base, fusion_tag, out_state, consumed));
  }

  NodeSpec out;
  out.kind = NodeKind::kOutput;
  out.combiner = Combiner::kConcat;
  out.tag = {ModalityTag::Kind::kMixed, -1};
  for (std::size_t s = 0; s < states.size(); ++s) {
    if (consumed[s]) continue;
    out.predecessors.push_back(states[s].node);
    out.width += states[s].width;
  }
  if (out.predecessors.empty()) {
    throw std::logic_error("internal error: every state is consumed");
  }
  const int out_id = builder.Add(std::move(out));

  ComputationGraph graph = std::move(builder.graph());
  graph.outputs = {out_id};
  graph.input_widths = widths;
  graph.length = length;
  graph.parameter_count = CountParameters(graph);
  return graph;
}

std::int64_t NodeParameterCount(const NodeSpec& node) {
  const std::int64_t in = node.input_width;
  const std::int64_t out = node.width;
  switch (node.kind) {
    case NodeKind::kNormalization:
      return 2 * out;  // scale + shift; batch-norm running stats are buffers
    case NodeKind::kLayer: {
      const LayerSpec& l = node.layer;
      switch (l.kind) {
        case LayerKind::kConv:
          return in * out * l.kernel + out;
        case LayerKind::kSeparableConv:
          return in * l.kernel + in * out + out;
        case LayerKind::kLightweightConv:
          return static_cast<std::int64_t>(std::min<std::int64_t>(l.reduction, in)) *
                 l.kernel;
        case LayerKind::kAttention: {
          const std::int64_t inner = node.inner_width;
          return 3 * (in * inner + inner) + inner * out + out;
        }
        case LayerKind::kGatedLinearUnit:
          return 2 * (in * out + out);
        default:
          return 0;
      }
    }
    default:
      return 0;
  }
}

std::int64_t CountParameters(const ComputationGraph& graph) {
  std::int64_t total = 0;
  for (const NodeSpec& n : graph.nodes) total += NodeParameterCount(n);
  return total;
}

BudgetDecision EnforceBudget(const ComputationGraph& graph, std::int64_t budget) {
  return CountParameters(graph) > budget ? BudgetDecision::kReject
                                         : BudgetDecision::kAccept;
}

}  // namespace fusearch
