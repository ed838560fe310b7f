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

#include <algorithm>
#include <set>

#include "doctest.h"
#include "fusearch/errors.h"
#include "fusearch/graph.h"
#include "golden_graphs.h"
#include "json.hpp"
#include "test_util.h"

namespace fusearch {
namespace {

using testing::ReferenceLayout;
using testing::RandomGenome;

const Vocabulary& V() { return Vocabulary::Default(); }

BranchGene Branch(int input, LayerKind kind, double dim = 1.0, int kernel = 0) {
  return {input, V().NormalizationIndex(Normalization::kNone),
          V().LayerIndex(kind, kernel), V().DimIndex(dim),
          V().ActivationIndex(Activation::kNone)};
}

BlockGene Block(BranchGene l, BranchGene r, Combiner c) {
  return {l, r, V().CombinerIndex(c)};
}

TEST_CASE("seed graphs match the golden node lists") {
  for (auto kind : {FusionKind::kEarly, FusionKind::kHybrid, FusionKind::kLate}) {
    CAPTURE(ToString(kind));
    const ComputationGraph g = Compile(SeedGenome(kind, 3), {8, 8, 8}, 6);
    const auto golden = golden::SeedGraph(kind);
    REQUIRE(g.nodes.size() == golden.size());
    for (std::size_t i = 0; i < golden.size(); ++i) {
      CAPTURE(i);
      CHECK(golden::Describe(g.nodes[i]) == golden[i]);
    }
    CHECK(g.parameter_count == golden::SeedParameterCount(kind));
  }
}

TEST_CASE("hybrid seed: disjoint modality subgraphs, one concat chain, fused layer") {
  const ComputationGraph g = Compile(SeedGenome(FusionKind::kHybrid, 3), {8, 8, 8}, 6);
  int concats = 0;
  for (const NodeSpec& n : g.nodes) {
    if (n.kind == NodeKind::kCombiner && n.combiner == Combiner::kConcat &&
        n.predecessors.size() == 2) {
      ++concats;
      CHECK(n.tag.kind == ModalityTag::Kind::kFusion);
    }
    if (n.tag.kind == ModalityTag::Kind::kModality) {
      for (int p : n.predecessors) {
        CHECK(g.nodes[p].tag == n.tag);
      }
    }
  }
  CHECK(concats == 2);
  CHECK(g.output().predecessors.size() == 1);
  CHECK(g.output_width() == 24);
}

TEST_CASE("single-modality hybrid seed has no cross-modal concatenation") {
  const ComputationGraph g = Compile(SeedGenome(FusionKind::kHybrid, 1), {8}, 6);
  for (const NodeSpec& n : g.nodes) {
    CHECK_FALSE((n.kind == NodeKind::kCombiner && n.combiner == Combiner::kConcat &&
                 n.predecessors.size() == 2));
  }
  CHECK(g.output_width() == 8);
}

TEST_CASE("all-identity genome") {
  const BlockGene id = Block(Branch(0, LayerKind::kIdentity),
                             Branch(0, LayerKind::kIdentity), Combiner::kAdd);
  std::vector<std::vector<BlockGene>> modality(3);
  for (int m = 0; m < 3; ++m) {
    BlockGene b = id;
    b.left.input = b.right.input = 2 * m;
    modality[m] = {b};
  }
  const Genome genome(modality, {});
  REQUIRE(Validate(genome).empty());
  const ComputationGraph g = Compile(genome, {8, 8, 8}, 5);
  CHECK(g.output_width() == 24);
  CHECK(g.parameter_count == 0);

  const ComputationGraph bare = Compile(Genome({{}, {}, {}}, {}), {8, 8, 8}, 5);
  CHECK(bare.output_width() == 24);
  CHECK(bare.parameter_count == 0);
}

TEST_CASE("orphaned fusion state joins the output concatenation") {
  // Hybrid seed plus a sixth fusion block that reads the modality finals
  // instead of fusion block 4.
  const Genome seed = SeedGenome(FusionKind::kHybrid, 3);
  std::vector<BlockGene> fusion = seed.fusion_blocks();
  fusion.push_back(Block(Branch(3, LayerKind::kConv, 1.0, 1),
                         Branch(7, LayerKind::kIdentity), Combiner::kAdd));
  const Genome genome(seed.modality_blocks(), fusion);
  REQUIRE(Validate(genome).empty());
  const ComputationGraph g = Compile(genome, {8, 8, 8}, 6);
  const NodeSpec& out = g.output();
  REQUIRE(out.predecessors.size() == 2);
  CHECK(g.nodes[out.predecessors[0]].state == 16);  // fusion block 4
  CHECK(g.nodes[out.predecessors[1]].state == 17);  // fusion block 5
  CHECK(out.width == 24 + 24);
}

TEST_CASE("dead branches") {
  SUBCASE("one dead branch passes the other through") {
    const Genome genome({{}},
                        {Block(Branch(0, LayerKind::kDeadBranch),
                               Branch(0, LayerKind::kConv, 2.0, 1), Combiner::kMul)});
    const ComputationGraph g = Compile(genome, {4}, 3);
    const NodeSpec& comb = g.nodes[g.output().predecessors[0]];
    CHECK(comb.kind == NodeKind::kCombiner);
    CHECK(comb.predecessors.size() == 1);
    CHECK(comb.width == 8);
  }
  SUBCASE("two dead branches forward the left input") {
    const Genome genome({{}, {}},
                        {Block(Branch(1, LayerKind::kDeadBranch),
                               Branch(0, LayerKind::kDeadBranch), Combiner::kConcat)});
    const ComputationGraph g = Compile(genome, {4, 6}, 3);
    // State 1 (modality 1 embedding) is forwarded; state 0 is orphaned.
    const NodeSpec& out = g.output();
    REQUIRE(out.predecessors.size() == 2);
    CHECK(g.nodes[out.predecessors[0]].state == 0);
    const NodeSpec& comb = g.nodes[out.predecessors[1]];
    CHECK(comb.predecessors == std::vector<int>{g.input_nodes[1]});
    CHECK(out.width == 4 + 6);
  }
}

TEST_CASE("width rules") {
  SUBCASE("add zero-pads to the wider operand; concat sums") {
    const Genome add({{}}, {Block(Branch(0, LayerKind::kConv, 2.0, 1),
                                  Branch(0, LayerKind::kIdentity), Combiner::kAdd)});
    CHECK(Compile(add, {6}, 3).output_width() == 12);
    const Genome cat({{}}, {Block(Branch(0, LayerKind::kConv, 0.5, 1),
                                  Branch(0, LayerKind::kIdentity), Combiner::kConcat)});
    CHECK(Compile(cat, {6}, 3).output_width() == 9);
  }
  SUBCASE("relative dims round to nearest, at least 1") {
    const Genome g({{}}, {Block(Branch(0, LayerKind::kConv, 0.5, 1),
                                Branch(0, LayerKind::kDeadBranch), Combiner::kAdd)});
    CHECK(Compile(g, {1}, 3).output_width() == 1);  // round(0.5) = 0 -> 1
    CHECK(Compile(g, {5}, 3).output_width() == 3);  // round(2.5) = 3
  }
  SUBCASE("attention inner width rounds up to a multiple of heads") {
    const Genome g({{}}, {Block({0, 2, V().LayerIndex(LayerKind::kAttention, 0, 0, 8),
                                 V().DimIndex(1.0), 3},
                                Branch(0, LayerKind::kDeadBranch), Combiner::kAdd)});
    const ComputationGraph cg = Compile(g, {6}, 3);
    const auto it = std::find_if(cg.nodes.begin(), cg.nodes.end(), [](const NodeSpec& n) {
      return n.kind == NodeKind::kLayer;
    });
    REQUIRE(it != cg.nodes.end());
    CHECK(it->inner_width == 8);
    CHECK(it->width == 6);
  }
  SUBCASE("overflow is a compile error") {
    CompileOptions opts;
    opts.max_width = 16;
    CHECK_THROWS_AS(Compile(SeedGenome(FusionKind::kHybrid, 3), {8, 8, 8}, 6, V(), opts),
                    CompileError);
  }
  SUBCASE("bad arguments") {
    const Genome seed = SeedGenome(FusionKind::kHybrid, 3);
    CHECK_THROWS_AS(Compile(seed, {8, 8}, 6), std::invalid_argument);
    CHECK_THROWS_AS(Compile(seed, {8, 0, 8}, 6), std::invalid_argument);
    CHECK_THROWS_AS(Compile(seed, {8, 8, 8}, 0), std::invalid_argument);
    std::vector<int> fields = seed.Encode();
    fields[2] = 29;
    CHECK_THROWS_AS(Compile(Genome::Decode(seed.layout(), fields), {8, 8, 8}, 6),
                    std::invalid_argument);
  }
}

TEST_CASE("graph invariants over random genomes") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    const Genome genome = RandomGenome(ReferenceLayout(), rng);
    const ComputationGraph g = Compile(genome, {8, 6, 4}, 5);
    CHECK(g == Compile(genome, {8, 6, 4}, 5));
    std::set<int> consumed_nodes;
    for (const NodeSpec& n : g.nodes) {
      CHECK(n.width > 0);
      for (int p : n.predecessors) {
        CHECK(p < n.id);
        consumed_nodes.insert(p);
      }
      if (n.kind == NodeKind::kCombiner) {
        CHECK((n.predecessors.size() == 1 || n.predecessors.size() == 2));
      }
    }
    REQUIRE(g.outputs.size() == 1);
    // Every node other than the output feeds something.
    for (const NodeSpec& n : g.nodes) {
      if (n.id != g.outputs[0]) CHECK(consumed_nodes.count(n.id) == 1);
    }
    std::int64_t manual = 0;
    for (const NodeSpec& n : g.nodes) manual += NodeParameterCount(n);
    CHECK(g.parameter_count == manual);
  }
}

TEST_CASE("parameter counts") {
  SUBCASE("single 1x1 standard convolution 8 -> 8") {
    const Genome g({{}}, {Block(Branch(0, LayerKind::kConv, 1.0, 1),
                                Branch(0, LayerKind::kDeadBranch), Combiner::kAdd)});
    // Enumerated: 8 * 8 weights * kernel 1, plus 8 biases.
    CHECK(CountParameters(Compile(g, {8}, 4)) == 8 * 8 * 1 + 8);
  }
  SUBCASE("per-layer formulas") {
    auto layer_params = [](int layer, int in, double dim) {
      const Genome g({{}}, {Block({0, 2, layer, V().DimIndex(dim), 3},
                                  Branch(0, LayerKind::kDeadBranch), Combiner::kAdd)});
      return CountParameters(Compile(g, {in}, 4));
    };
    CHECK(layer_params(V().LayerIndex(LayerKind::kConv, 3), 4, 2.0) == 4 * 8 * 3 + 8);
    CHECK(layer_params(V().LayerIndex(LayerKind::kSeparableConv, 5), 4, 2.0) ==
          4 * 5 + 4 * 8 + 8);
    CHECK(layer_params(V().LayerIndex(LayerKind::kLightweightConv, 7, 4), 8, 1.0) ==
          4 * 7);
    CHECK(layer_params(V().LayerIndex(LayerKind::kLightweightConv, 7, 16), 8, 1.0) ==
          8 * 7);
    CHECK(layer_params(V().LayerIndex(LayerKind::kAttention, 0, 0, 4), 6, 1.0) ==
          3 * (6 * 8 + 8) + 8 * 6 + 6);
    CHECK(layer_params(V().LayerIndex(LayerKind::kGatedLinearUnit), 4, 0.5) ==
          2 * (4 * 2 + 2));
    CHECK(layer_params(V().LayerIndex(LayerKind::kMaxPool, 3), 4, 1.0) == 0);
    CHECK(layer_params(V().LayerIndex(LayerKind::kAvgPool, 5), 4, 1.0) == 0);
    CHECK(layer_params(V().LayerIndex(LayerKind::kIdentity), 4, 1.0) == 0);
  }
  SUBCASE("normalizations count scale and shift") {
    const BlockGene b{{0, 0, V().LayerIndex(LayerKind::kIdentity), 1, 3},
                      {0, 1, V().LayerIndex(LayerKind::kIdentity), 1, 3},
                      V().CombinerIndex(Combiner::kAdd)};
    const Genome g({{}}, {b});
    CHECK(CountParameters(Compile(g, {5}, 4)) == 2 * 5 + 2 * 5);
  }
}

TEST_CASE("budget enforcement") {
  // 76 * 987013 + 987013 = 76,000,001 parameters in one 1x1 convolution.
  const Vocabulary vocab = Vocabulary::WithOutputDims({987013.0 / 76.0});
  const Genome g({{}}, {{{0, 2, vocab.LayerIndex(LayerKind::kConv, 1), 0, 3},
                         {0, 2, vocab.LayerIndex(LayerKind::kDeadBranch), 0, 3},
                         0}});
  CompileOptions opts;
  opts.max_width = 1 << 20;
  const ComputationGraph big = Compile(g, {76}, 1, vocab, opts);
  REQUIRE(big.parameter_count == 76000001);
  CHECK(EnforceBudget(big, 76000000) == BudgetDecision::kReject);
  CHECK(EnforceBudget(big, 76000001) == BudgetDecision::kAccept);

  const ComputationGraph identity = Compile(Genome({{}}, {}), {8}, 4);
  CHECK(CountParameters(identity) == 0);
  CHECK(EnforceBudget(identity, 0) == BudgetDecision::kAccept);
}

std::set<FusionKind> Only(FusionKind k) { return {k}; }

TEST_CASE("fusion classification") {
  SUBCASE("seeds classify as their own kind") {
    for (auto kind : {FusionKind::kEarly, FusionKind::kHybrid, FusionKind::kLate}) {
      for (int m = 1; m <= 3; ++m) {
        CAPTURE(ToString(kind));
        CAPTURE(m);
        const std::vector<int> widths(m, 8);
        const FusionReport r = ClassifyFusion(Compile(SeedGenome(kind, m), widths, 6));
        for (int i = 0; i < m; ++i) {
          CHECK(r.per_modality[i] == Only(kind));
          CHECK_FALSE(r.disconnected[i]);
        }
      }
    }
  }

  SUBCASE("identity modality fused into the fusion stack is early") {
    // Modality 0: identity. Modality 1: one conv block. Fusion: concat then
    // conv. Modality 2: one conv block, orphaned (late).
    const Genome genome(
        {{Block(Branch(0, LayerKind::kIdentity), Branch(0, LayerKind::kDeadBranch),
                Combiner::kAdd)},
         {Block(Branch(2, LayerKind::kConv, 1.0, 3), Branch(2, LayerKind::kDeadBranch),
                Combiner::kAdd)},
         {Block(Branch(4, LayerKind::kConv, 1.0, 3), Branch(4, LayerKind::kDeadBranch),
                Combiner::kAdd)}},
        {Block(Branch(1, LayerKind::kIdentity), Branch(3, LayerKind::kIdentity),
               Combiner::kConcat),
         Block(Branch(6, LayerKind::kConv, 1.0, 1), Branch(6, LayerKind::kDeadBranch),
               Combiner::kAdd)});
    REQUIRE(Validate(genome).empty());
    const FusionReport r = ClassifyFusion(Compile(genome, {8, 8, 8}, 6));
    CHECK(r.per_modality[0] == Only(FusionKind::kEarly));
    CHECK(r.per_modality[1] == Only(FusionKind::kHybrid));
    CHECK(r.per_modality[2] == Only(FusionKind::kLate));
  }

  SUBCASE("a modality feeding a fusion block and the output is hybrid and late") {
    // Modality 0 block 0 feeds the fusion stack; its block 1 is an orphan.
    const Genome genome(
        {{Block(Branch(0, LayerKind::kConv, 1.0, 1), Branch(0, LayerKind::kDeadBranch),
                Combiner::kAdd),
          Block(Branch(1, LayerKind::kConv, 1.0, 3), Branch(1, LayerKind::kDeadBranch),
                Combiner::kAdd)},
         {}},
        {Block(Branch(1, LayerKind::kIdentity), Branch(3, LayerKind::kIdentity),
               Combiner::kAdd),
         Block(Branch(4, LayerKind::kGatedLinearUnit), Branch(4, LayerKind::kDeadBranch),
               Combiner::kAdd)});
    REQUIRE(Validate(genome).empty());
    const FusionReport r = ClassifyFusion(Compile(genome, {8, 8}, 6));
    CHECK(r.per_modality[0] == std::set{FusionKind::kHybrid, FusionKind::kLate});
    CHECK(r.per_modality[1] == Only(FusionKind::kEarly));
  }

  SUBCASE("joined without further transforms counts as late") {
    const Genome genome({{Block(Branch(0, LayerKind::kConv, 1.0, 1),
                                Branch(0, LayerKind::kDeadBranch), Combiner::kAdd)},
                         {}},
                        {Block(Branch(1, LayerKind::kIdentity),
                               Branch(2, LayerKind::kMaxPool, 1.0, 3), Combiner::kConcat)});
    const FusionReport r = ClassifyFusion(Compile(genome, {4, 4}, 6));
    CHECK(r.per_modality[0] == Only(FusionKind::kLate));
    CHECK(r.per_modality[1] == Only(FusionKind::kLate));
  }

  SUBCASE("modality without a path to the output is flagged") {
    ComputationGraph g = Compile(Genome({{}, {}}, {}), {4, 4}, 3);
    NodeSpec& out = g.nodes[g.outputs[0]];
    out.predecessors = {g.input_nodes[0]};
    const FusionReport r = ClassifyFusion(g);
    CHECK_FALSE(r.disconnected[0]);
    CHECK(r.disconnected[1]);
    CHECK(r.per_modality[1].empty());
  }

  SUBCASE("every connected modality gets a non-empty strategy set") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 200; ++trial) {
      const FusionReport r =
          ClassifyFusion(Compile(RandomGenome(ReferenceLayout(), rng), {4, 4, 4}, 4));
      for (int m = 0; m < 3; ++m) {
        CHECK_FALSE(r.disconnected[m]);
        CHECK_FALSE(r.per_modality[m].empty());
      }
    }
  }
}

TEST_CASE("dot export") {
  SUBCASE("empty-fusion single-modality graph has one output node") {
    const std::string dot = ToDot(Compile(SeedGenome(FusionKind::kLate, 1), {8}, 4));
    std::size_t count = 0, pos = 0;
    while ((pos = dot.find("output concat", pos)) != std::string::npos) {
      ++count;
      ++pos;
    }
    CHECK(count == 1);
    CHECK(dot.rfind("digraph", 0) == 0);
  }
  SUBCASE("hybrid seed uses three modality fills plus the fusion fill") {
    const std::string dot =
        ToDot(Compile(SeedGenome(FusionKind::kHybrid, 3), {8, 8, 8}, 4));
    std::set<std::string> fills;
    std::size_t pos = 0;
    while ((pos = dot.find("fillcolor=\"", pos)) != std::string::npos) {
      pos += 11;
      fills.insert(dot.substr(pos, 7));
    }
    // Three modalities, fusion, and the mixed output node.
    CHECK(fills.size() == 5);
    CHECK(fills.count("#f2a3a3") == 1);
  }
  SUBCASE("byte-identical across compilations") {
    const Genome seed = SeedGenome(FusionKind::kHybrid, 3);
    CHECK(ToDot(Compile(seed, {8, 8, 8}, 4)) == ToDot(Compile(seed, {8, 8, 8}, 4)));
  }
}

TEST_CASE("structured graph export") {
  const ComputationGraph g = Compile(SeedGenome(FusionKind::kHybrid, 3), {8, 8, 8}, 4);
  const auto doc = nlohmann::json::parse(ToGraphJson(g));
  CHECK(doc["format"] == "fusearch-graph");
  CHECK(doc["version"] == 1);
  CHECK(doc["nodes"].size() == g.nodes.size());
  std::size_t edges = 0;
  for (const NodeSpec& n : g.nodes) edges += n.predecessors.size();
  CHECK(doc["edges"].size() == edges);
  CHECK(doc["parameter_count"] == g.parameter_count);
}

}  // namespace
}  // namespace fusearch
