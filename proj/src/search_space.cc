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

#include "fusearch/search_space.h"

#include <stdexcept>

namespace fusearch {

std::string_view ToString(FusionKind kind) {
  switch (kind) {
    case FusionKind::kEarly: return "early";
    case FusionKind::kHybrid: return "hybrid";
    case FusionKind::kLate: return "late";
  }
  return "?";
}

FusionKind ParseFusionKind(std::string_view name) {
  if (name == "early") return FusionKind::kEarly;
  if (name == "hybrid") return FusionKind::kHybrid;
  if (name == "late") return FusionKind::kLate;
  throw std::invalid_argument("unknown fusion kind '" + std::string(name) + "'");
}

namespace {

class SeedBuilder {
 public:
  SeedBuilder(const Vocabulary& vocab, int heads)
      : none_norm_(vocab.NormalizationIndex(Normalization::kNone)),
        layer_norm_(vocab.NormalizationIndex(Normalization::kLayerNorm)),
        identity_(vocab.LayerIndex(LayerKind::kIdentity)),
        dead_(vocab.LayerIndex(LayerKind::kDeadBranch)),
        conv1_(vocab.LayerIndex(LayerKind::kConv, 1)),
        attention_(vocab.LayerIndex(LayerKind::kAttention, 0, 0, heads)),
        dim1_(vocab.DimIndex(1.0)),
        dim4_(vocab.DimIndex(4.0)),
        no_act_(vocab.ActivationIndex(Activation::kNone)),
        relu_(vocab.ActivationIndex(Activation::kRelu)),
        add_(vocab.CombinerIndex(Combiner::kAdd)),
        concat_(vocab.CombinerIndex(Combiner::kConcat)) {}

  BranchGene Identity(int input) const {
    return {input, none_norm_, identity_, dim1_, no_act_};
  }
  BranchGene Dead(int input) const {
    return {input, none_norm_, dead_, dim1_, no_act_};
  }

  BlockGene PassThrough(int input) const {
    return {Identity(input), Dead(input), add_};
  }
  BlockGene Concat(int a, int b) const {
    return {Identity(a), Identity(b), concat_};
  }

  // Appends one Transformer layer reading `input`. `first_state` is the global
  // index of the state the first appended block will produce. Returns the
  // index of the layer's output state.
  int AppendLayer(int input, int first_state, std::vector<BlockGene>& out) const {
    const int attended = first_state;
    const int expanded = first_state + 1;
    out.push_back({{input, layer_norm_, attention_, dim1_, no_act_},
                   Identity(input), add_});
    out.push_back({{attended, layer_norm_, conv1_, dim4_, relu_},
                   Dead(attended), add_});
    out.push_back({{expanded, none_norm_, conv1_, dim1_, no_act_},
                   Identity(attended), add_});
    return first_state + 2;
  }

 private:
  int none_norm_, layer_norm_;
  int identity_, dead_, conv1_, attention_;
  int dim1_, dim4_;
  int no_act_, relu_;
  int add_, concat_;
};

Genome BuildSeed(FusionKind kind, int modalities, const SeedOptions& options,
                 const Vocabulary& vocab, const std::string& name) {
  if (modalities < 1) throw std::invalid_argument("need at least one modality");
  if (options.leading_pass_through < 0) {
    throw std::invalid_argument("negative pass-through count");
  }
  const SeedBuilder sb(vocab, options.attention_heads);
  const int modality_layers = kind == FusionKind::kEarly    ? 0
                              : kind == FusionKind::kHybrid ? 1
                                                            : 2;
  const int fusion_layers = 2 - modality_layers;

  std::vector<std::vector<BlockGene>> modality(modalities);
  std::vector<int> finals(modalities);
  int state = 0;
  for (int m = 0; m < modalities; ++m) {
    int current = state;  // embedding
    for (int l = 0; l < modality_layers; ++l) {
      const int first = state + 1 + static_cast<int>(modality[m].size());
      current = sb.AppendLayer(current, first, modality[m]);
    }
    finals[m] = current;
    state += static_cast<int>(modality[m].size()) + 1;
  }

  std::vector<BlockGene> fusion;
  if (fusion_layers > 0) {
    const int base = state;  // global index of fusion block 0's output
    auto next_state = [&] { return base + static_cast<int>(fusion.size()); };
    int current = finals[0];
    for (int i = 0; i < options.leading_pass_through; ++i) {
      fusion.push_back(sb.PassThrough(current));
      current = next_state() - 1;
    }
    for (int m = 1; m < modalities; ++m) {
      fusion.push_back(sb.Concat(current, finals[m]));
      current = next_state() - 1;
    }
    for (int l = 0; l < fusion_layers; ++l) {
      current = sb.AppendLayer(current, next_state(), fusion);
    }
  }
  return Genome(std::move(modality), std::move(fusion), name, 0);
}

}  // namespace

Genome SeedGenome(FusionKind kind, int modalities, const SeedOptions& options,
                  const Vocabulary& vocab) {
  return BuildSeed(kind, modalities, options, vocab, std::string(ToString(kind)));
}

Genome UnimodalSeedGenome(const SeedOptions& options, const Vocabulary& vocab) {
  SeedOptions o = options;
  o.leading_pass_through = 2;
  return BuildSeed(FusionKind::kEarly, 1, o, vocab, "unimodal");
}

int FieldChoices(const GenomeLayout& layout, BlockRef ref, int field_in_block,
                 const Vocabulary& vocab) {
  switch (FieldKindAt(field_in_block)) {
    case FieldKind::kInput: return layout.input_choices(ref);
    case FieldKind::kNormalization: return vocab.normalization_count();
    case FieldKind::kLayer: return vocab.layer_count();
    case FieldKind::kOutputDim: return vocab.dim_count();
    case FieldKind::kActivation: return vocab.activation_count();
    case FieldKind::kCombiner: return vocab.combiner_count();
  }
  return 1;
}

Genome Mutate(const Genome& genome, double rate, std::mt19937_64& rng,
              MutationRecord* record, const Vocabulary& vocab) {
  if (!(rate >= 0.0 && rate <= 1.0)) {
    throw std::invalid_argument("mutation rate must lie in [0, 1]");
  }
  const GenomeLayout layout = genome.layout();
  std::vector<int> fields = genome.Encode();
  std::bernoulli_distribution flip(rate);
  if (record != nullptr) {
    record->flipped.clear();
    record->changed.clear();
  }
  int pos = 0;
  for (const BlockRef& ref : layout.blocks()) {
    for (int f = 0; f < BlockGene::kFieldCount; ++f, ++pos) {
      if (!flip(rng)) continue;
      if (record != nullptr) record->flipped.push_back(pos);
      const int choices = FieldChoices(layout, ref, f, vocab);
      if (choices < 2) continue;
      const int base = FieldKindAt(f) == FieldKind::kInput
                           ? layout.first_input(ref)
                           : 0;
      const int current = fields[pos] - base;
      std::uniform_int_distribution<int> pick(0, choices - 2);
      int value = pick(rng);
      if (value >= current) ++value;
      fields[pos] = base + value;
      if (record != nullptr) record->changed.push_back(pos);
    }
  }
  return Genome::Decode(layout, fields, genome.seed_name(),
                        genome.generation() + 1);
}

std::vector<BlockSlot> SlotsFor(const GenomeLayout& layout) {
  std::vector<BlockSlot> slots;
  for (const BlockRef& ref : layout.blocks()) {
    const int n = layout.input_choices(ref);
    slots.push_back({n, n});
  }
  return slots;
}

BigInt Cardinality(const std::vector<BlockSlot>& slots, const Vocabulary& vocab) {
  const BigInt per_branch = BigInt(vocab.normalization_count()) *
                            vocab.layer_count() * vocab.dim_count() *
                            vocab.activation_count();
  BigInt total = 1;
  for (const BlockSlot& s : slots) {
    total *= BigInt(vocab.combiner_count()) * (per_branch * s.left_inputs) *
             (per_branch * s.right_inputs);
  }
  return total;
}

BigInt Cardinality(const GenomeLayout& layout, const Vocabulary& vocab) {
  return Cardinality(SlotsFor(layout), vocab);
}

}  // namespace fusearch
