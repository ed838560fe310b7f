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

#include <cstdint>

#include "fusearch/graph.h"

namespace fusearch {

namespace {

// Path summary carried from an embedding towards the output, packed as bits.
constexpr int kPre = 1;     // transform seen before the join point
constexpr int kJoined = 2;  // passed an interior join point
constexpr int kPost = 4;    // transform seen after the join point

bool IsTransform(const NodeSpec& n) {
  return n.kind == NodeKind::kLayer && n.layer.parameterized();
}

}  // namespace

FusionReport ClassifyFusion(const ComputationGraph& graph) {
  const int num_modalities = graph.modality_count();
  const int num_nodes = static_cast<int>(graph.nodes.size());
  const int out_id = graph.outputs.at(0);

  // Modalities feeding each node, as a bitmask.
  std::vector<std::uint64_t> sources(num_nodes, 0);
  for (const NodeSpec& n : graph.nodes) {
    if (n.kind == NodeKind::kEmbeddingInput) {
      sources[n.id] = std::uint64_t{1} << n.modality;
    }
    for (int p : n.predecessors) sources[n.id] |= sources[p];
  }

  FusionReport report;
  report.per_modality.resize(num_modalities);
  report.disconnected.assign(num_modalities, false);

  for (int m = 0; m < num_modalities; ++m) {
    const std::uint64_t own = std::uint64_t{1} << m;
    // reach[n] is a set of summaries (bit i set = summary i present) describing
    // how modality m's signal has been processed by the time it reaches n.
    std::vector<std::uint8_t> reach(num_nodes, 0);
    reach[graph.input_nodes.at(m)] = 1u << 0;
    for (const NodeSpec& n : graph.nodes) {
      if (n.kind == NodeKind::kEmbeddingInput || n.id == out_id) continue;
      // Operands combine: pick one summary per m-carrying operand and OR them.
      std::uint8_t combined = 0;
      bool any = false;
      for (int p : n.predecessors) {
        if (reach[p] == 0) continue;
        if (!any) {
          combined = reach[p];
          any = true;
          continue;
        }
        std::uint8_t product = 0;
        for (int a = 0; a < 8; ++a) {
          if (!(combined & (1u << a))) continue;
          for (int b = 0; b < 8; ++b) {
            if (reach[p] & (1u << b)) product |= static_cast<std::uint8_t>(1u << (a | b));
          }
        }
        combined = product;
      }
      if (!any) continue;
      const bool joins = num_modalities > 1
                             ? (sources[n.id] & ~own) != 0
                             : n.tag.kind != ModalityTag::Kind::kModality;
      for (int s = 0; s < 8; ++s) {
        if (!(combined & (1u << s))) continue;
        int next = s;
        if (joins) next |= kJoined;
        if (IsTransform(n)) next |= (next & kJoined) ? kPost : kPre;
        reach[n.id] |= static_cast<std::uint8_t>(1u << next);
      }
    }
    std::uint8_t at_output = 0;
    for (int p : graph.nodes[out_id].predecessors) at_output |= reach[p];
    if (at_output == 0) {
      report.disconnected[m] = true;
      continue;
    }
    for (int s = 0; s < 8; ++s) {
      if (!(at_output & (1u << s))) continue;
      if (!(s & kJoined) || !(s & kPost)) {
        report.per_modality[m].insert(FusionKind::kLate);
      } else if (s & kPre) {
        report.per_modality[m].insert(FusionKind::kHybrid);
      } else {
        report.per_modality[m].insert(FusionKind::kEarly);
      }
    }
  }
  return report;
}

}  // namespace fusearch
