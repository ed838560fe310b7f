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

#include <sstream>

#include "fusearch/graph.h"
#include "json.hpp"

namespace fusearch {

namespace {

// Fill colors per modality; cycled for more than five modalities.
constexpr const char* kModalityFill[] = {"#f7e08a", "#a9d8a0", "#c9aee5",
                                         "#9cc9e8", "#f2c29b"};
constexpr const char* kFusionFill = "#f2a3a3";
constexpr const char* kMixedFill = "#d9d9d9";

const char* Fill(const ModalityTag& tag) {
  switch (tag.kind) {
    case ModalityTag::Kind::kModality:
      return kModalityFill[tag.modality % 5];
    case ModalityTag::Kind::kFusion:
      return kFusionFill;
    case ModalityTag::Kind::kMixed:
      return kMixedFill;
  }
  return kMixedFill;
}

const char* Border(NodeKind kind) {
  switch (kind) {
    case NodeKind::kNormalization: return "#c9a100";  // yellow
    case NodeKind::kActivation: return "#c0392b";     // red
    case NodeKind::kLayer: return "#1f5fbf";          // blue
    case NodeKind::kCombiner: return "#2e8b57";       // green
    default: return "#000000";
  }
}

std::string TagName(const ModalityTag& tag) {
  switch (tag.kind) {
    case ModalityTag::Kind::kModality: return "modality-" + std::to_string(tag.modality);
    case ModalityTag::Kind::kFusion: return "fusion";
    case ModalityTag::Kind::kMixed: return "mixed";
  }
  return "?";
}

std::string OpName(const NodeSpec& n) {
  switch (n.kind) {
    case NodeKind::kEmbeddingInput: return "embedding " + std::to_string(n.modality);
    case NodeKind::kNormalization: return std::string(ToString(n.normalization));
    case NodeKind::kLayer: return n.layer.name;
    case NodeKind::kActivation: return std::string(ToString(n.activation));
    case NodeKind::kCombiner:
      return n.predecessors.size() == 1 ? "pass" : std::string(ToString(n.combiner));
    case NodeKind::kOutput: return "output concat";
  }
  return "?";
}

}  // namespace

std::string ToDot(const ComputationGraph& graph, const std::string& name) {
  std::ostringstream os;
  os << "digraph \"" << name << "\" {\n";
  os << "  rankdir=TB;\n";
  os << "  node [shape=box, style=\"filled,rounded\", penwidth=2, "
        "fontname=\"Helvetica\"];\n";
  for (const NodeSpec& n : graph.nodes) {
    os << "  n" << n.id << " [label=\"" << OpName(n) << "\\nw=" << n.width
       << "\", fillcolor=\"" << Fill(n.tag) << "\", color=\"" << Border(n.kind)
       << "\", class=\"" << TagName(n.tag) << ' ' << ToString(n.kind) << "\"];\n";
  }
  for (const NodeSpec& n : graph.nodes) {
    for (int p : n.predecessors) os << "  n" << p << " -> n" << n.id << ";\n";
  }
  os << "}\n";
  return os.str();
}

std::string ToGraphJson(const ComputationGraph& graph) {
  using nlohmann::ordered_json;
  ordered_json doc;
  doc["format"] = "fusearch-graph";
  doc["version"] = 1;
  doc["length"] = graph.length;
  doc["input_widths"] = graph.input_widths;
  doc["parameter_count"] = graph.parameter_count;
  doc["outputs"] = graph.outputs;
  ordered_json nodes = ordered_json::array();
  ordered_json edges = ordered_json::array();
  for (const NodeSpec& n : graph.nodes) {
    ordered_json j;
    j["id"] = n.id;
    j["kind"] = ToString(n.kind);
    j["op"] = OpName(n);
    j["tag"] = TagName(n.tag);
    j["width"] = n.width;
    j["input_width"] = n.input_width;
    if (n.kind == NodeKind::kLayer && n.layer.kind == LayerKind::kAttention) {
      j["inner_width"] = n.inner_width;
      j["heads"] = n.layer.heads;
    }
    if (n.state >= 0) j["state"] = n.state;
    j["parameters"] = NodeParameterCount(n);
    nodes.push_back(std::move(j));
    for (int p : n.predecessors) edges.push_back({p, n.id});
  }
  doc["nodes"] = std::move(nodes);
  doc["edges"] = std::move(edges);
  return doc.dump(2) + "\n";
}

}  // namespace fusearch
