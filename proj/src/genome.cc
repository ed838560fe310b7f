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

#include "fusearch/genome.h"

#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "fusearch/errors.h"

namespace fusearch {

FieldKind FieldKindAt(int field_in_block) {
  switch (field_in_block) {
    case 0: case 5: return FieldKind::kInput;
    case 1: case 6: return FieldKind::kNormalization;
    case 2: case 7: return FieldKind::kLayer;
    case 3: case 8: return FieldKind::kOutputDim;
    case 4: case 9: return FieldKind::kActivation;
    case 10: return FieldKind::kCombiner;
    default: throw std::out_of_range("block field index out of range");
  }
}

// ---------------------------------------------------------------------------
// GenomeLayout

int GenomeLayout::total_blocks() const {
  int n = fusion_blocks;
  for (int b : modality_blocks) n += b;
  return n;
}

int GenomeLayout::modality_state_count() const {
  int n = 0;
  for (int b : modality_blocks) n += b + 1;
  return n;
}

int GenomeLayout::modality_offset(int m) const {
  int n = 0;
  for (int i = 0; i < m; ++i) n += modality_blocks[i] + 1;
  return n;
}

int GenomeLayout::output_state(BlockRef ref) const {
  if (ref.architecture == BlockRef::kFusion) {
    return modality_state_count() + ref.block;
  }
  return modality_offset(ref.architecture) + ref.block + 1;
}

int GenomeLayout::first_input(BlockRef ref) const {
  if (ref.architecture == BlockRef::kFusion) return 0;
  return modality_offset(ref.architecture);
}

int GenomeLayout::input_choices(BlockRef ref) const {
  if (ref.architecture == BlockRef::kFusion) {
    return modality_state_count() + ref.block;
  }
  return ref.block + 1;
}

int GenomeLayout::architecture_of_state(int state) const {
  int offset = 0;
  for (int m = 0; m < modality_count(); ++m) {
    const int n = modality_blocks[m] + 1;
    if (state < offset + n) return m;
    offset += n;
  }
  return BlockRef::kFusion;
}

std::vector<BlockRef> GenomeLayout::blocks() const {
  std::vector<BlockRef> out;
  out.reserve(total_blocks());
  for (int m = 0; m < modality_count(); ++m) {
    for (int b = 0; b < modality_blocks[m]; ++b) out.push_back({m, b});
  }
  for (int b = 0; b < fusion_blocks; ++b) out.push_back({BlockRef::kFusion, b});
  return out;
}

// ---------------------------------------------------------------------------
// Genome

Genome::Genome(std::vector<std::vector<BlockGene>> modality_blocks,
               std::vector<BlockGene> fusion_blocks, std::string seed_name,
               int generation)
    : modality_blocks_(std::move(modality_blocks)),
      fusion_blocks_(std::move(fusion_blocks)),
      seed_name_(std::move(seed_name)),
      generation_(generation) {}

GenomeLayout Genome::layout() const {
  GenomeLayout layout;
  for (const auto& blocks : modality_blocks_) {
    layout.modality_blocks.push_back(static_cast<int>(blocks.size()));
  }
  layout.fusion_blocks = static_cast<int>(fusion_blocks_.size());
  return layout;
}

const BlockGene& Genome::block(BlockRef ref) const {
  if (ref.architecture == BlockRef::kFusion) return fusion_blocks_.at(ref.block);
  return modality_blocks_.at(ref.architecture).at(ref.block);
}

namespace {

void AppendBlock(const BlockGene& b, std::vector<int>& out) {
  for (const BranchGene* br : {&b.left, &b.right}) {
    out.push_back(br->input);
    out.push_back(br->normalization);
    out.push_back(br->layer);
    out.push_back(br->output_dim);
    out.push_back(br->activation);
  }
  out.push_back(b.combiner);
}

BlockGene ReadBlock(const int* f) {
  BlockGene b;
  b.left = {f[0], f[1], f[2], f[3], f[4]};
  b.right = {f[5], f[6], f[7], f[8], f[9]};
  b.combiner = f[10];
  return b;
}

}  // namespace

std::vector<int> Genome::Encode() const {
  std::vector<int> out;
  out.reserve(layout().field_count());
  for (const auto& blocks : modality_blocks_) {
    for (const BlockGene& b : blocks) AppendBlock(b, out);
  }
  for (const BlockGene& b : fusion_blocks_) AppendBlock(b, out);
  return out;
}

Genome Genome::Decode(const GenomeLayout& layout, const std::vector<int>& fields,
                      std::string seed_name, int generation) {
  if (static_cast<int>(fields.size()) != layout.field_count()) {
    throw std::invalid_argument("field count does not match layout");
  }
  const int* f = fields.data();
  std::vector<std::vector<BlockGene>> modality(layout.modality_count());
  for (int m = 0; m < layout.modality_count(); ++m) {
    for (int b = 0; b < layout.modality_blocks[m]; ++b) {
      modality[m].push_back(ReadBlock(f));
      f += BlockGene::kFieldCount;
    }
  }
  std::vector<BlockGene> fusion;
  for (int b = 0; b < layout.fusion_blocks; ++b) {
    fusion.push_back(ReadBlock(f));
    f += BlockGene::kFieldCount;
  }
  return Genome(std::move(modality), std::move(fusion), std::move(seed_name),
                generation);
}

Genome Genome::WithMetadata(std::string seed_name, int generation) const {
  Genome g = *this;
  g.seed_name_ = std::move(seed_name);
  g.generation_ = generation;
  return g;
}

// ---------------------------------------------------------------------------
// Validation

namespace {

std::string Where(BlockRef ref) {
  if (ref.architecture == BlockRef::kFusion) {
    return "fusion block " + std::to_string(ref.block);
  }
  return "modality " + std::to_string(ref.architecture) + " block " +
         std::to_string(ref.block);
}

void CheckIndex(int value, int limit, const char* field, BlockRef ref,
                std::vector<Violation>& out) {
  if (value < 0 || value >= limit) {
    out.push_back({Violation::Kind::kOutOfRange, ref,
                   Where(ref) + ": " + field + " index " + std::to_string(value) +
                       " outside [0, " + std::to_string(limit) + ")"});
  }
}

void CheckInput(int input, const GenomeLayout& layout, BlockRef ref,
                const char* side, std::vector<Violation>& out) {
  const std::string prefix = Where(ref) + ": " + side + " input " +
                             std::to_string(input);
  if (input < 0 || input >= layout.state_count()) {
    out.push_back({Violation::Kind::kNoSuchState, ref,
                   prefix + " names no state"});
    return;
  }
  const int first = layout.first_input(ref);
  const int count = layout.input_choices(ref);
  if (input >= first && input < first + count) return;
  const int owner = layout.architecture_of_state(input);
  if (ref.architecture != BlockRef::kFusion && owner != ref.architecture) {
    out.push_back({Violation::Kind::kCrossModality, ref,
                   prefix + " belongs to another architecture"});
  } else {
    out.push_back({Violation::Kind::kForwardReference, ref,
                   prefix + " is not produced before this block"});
  }
}

}  // namespace

std::vector<Violation> Validate(const Genome& genome, const Vocabulary& vocab) {
  std::vector<Violation> out;
  const GenomeLayout layout = genome.layout();
  for (const BlockRef& ref : layout.blocks()) {
    const BlockGene& b = genome.block(ref);
    for (auto [branch, side] : {std::pair{&b.left, "left"},
                                std::pair{&b.right, "right"}}) {
      CheckInput(branch->input, layout, ref, side, out);
      CheckIndex(branch->normalization, vocab.normalization_count(),
                 "normalization", ref, out);
      CheckIndex(branch->layer, vocab.layer_count(), "layer", ref, out);
      CheckIndex(branch->output_dim, vocab.dim_count(), "output dim", ref, out);
      CheckIndex(branch->activation, vocab.activation_count(), "activation", ref,
                 out);
    }
    CheckIndex(b.combiner, vocab.combiner_count(), "combiner", ref, out);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization
//
// genome {
//   format = fusearch-genome
//   vocabulary_version = 1
//   relative_output_dims = 0.5 1 2 4
//   seed = hybrid
//   generation = 0
//   modality 0 {
//     block 0 = <11 integers>
//   }
//   fusion {
//   }
// }

namespace {

constexpr char kFormatName[] = "fusearch-genome";

std::string FormatDouble(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void WriteBlocks(std::ostringstream& os, const std::vector<BlockGene>& blocks) {
  std::vector<int> fields;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    fields.clear();
    AppendBlock(blocks[i], fields);
    os << "    block " << i << " =";
    for (int f : fields) os << ' ' << f;
    os << '\n';
  }
}

std::string Trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void Fail(int line, const std::string& what) {
  throw FormatError("genome line " + std::to_string(line) + ": " + what);
}

}  // namespace

std::string Serialize(const Genome& genome, const Vocabulary& vocab) {
  std::ostringstream os;
  os << "genome {\n";
  os << "  format = " << kFormatName << '\n';
  os << "  vocabulary_version = " << Vocabulary::kVersion << '\n';
  os << "  relative_output_dims =";
  for (double d : vocab.relative_output_dims) os << ' ' << FormatDouble(d);
  os << '\n';
  os << "  seed = " << (genome.seed_name().empty() ? "-" : genome.seed_name())
     << '\n';
  os << "  generation = " << genome.generation() << '\n';
  for (int m = 0; m < genome.modality_count(); ++m) {
    os << "  modality " << m << " {\n";
    WriteBlocks(os, genome.modality_blocks()[m]);
    os << "  }\n";
  }
  os << "  fusion {\n";
  WriteBlocks(os, genome.fusion_blocks());
  os << "  }\n";
  os << "}\n";
  return os.str();
}

Genome Deserialize(const std::string& text, std::vector<double>* output_dims) {
  std::istringstream is(text);
  std::string raw;
  int line_no = 0;
  bool in_genome = false, closed = false, saw_format = false, saw_version = false;
  // -2: top level of genome; -1: fusion section; >=0 modality section.
  int section = -2;
  std::string seed_name;
  int generation = 0;
  std::vector<std::vector<BlockGene>> modality;
  std::vector<BlockGene> fusion;

  while (std::getline(is, raw)) {
    ++line_no;
    const std::string line = Trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (closed) Fail(line_no, "content after closing brace");
    if (!in_genome) {
      if (line != "genome {") Fail(line_no, "expected 'genome {'");
      in_genome = true;
      continue;
    }
    if (line == "}") {
      if (section == -2) {
        closed = true;
      } else {
        section = -2;
      }
      continue;
    }
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (section == -2 && key == "modality") {
      int m = -1;
      std::string brace;
      if (!(ls >> m >> brace) || brace != "{" ||
          m != static_cast<int>(modality.size())) {
        Fail(line_no, "bad modality header");
      }
      modality.emplace_back();
      section = m;
      continue;
    }
    if (section == -2 && key == "fusion") {
      std::string brace;
      if (!(ls >> brace) || brace != "{") Fail(line_no, "bad fusion header");
      section = -1;
      continue;
    }
    if (key == "block") {
      if (section == -2) Fail(line_no, "block outside a section");
      auto& list = section == -1 ? fusion : modality[section];
      int index = -1;
      std::string eq;
      if (!(ls >> index >> eq) || eq != "=" ||
          index != static_cast<int>(list.size())) {
        Fail(line_no, "bad block header");
      }
      int fields[BlockGene::kFieldCount];
      for (int& f : fields) {
        if (!(ls >> f)) Fail(line_no, "block needs 11 integer fields");
      }
      std::string extra;
      if (ls >> extra) Fail(line_no, "trailing tokens after block fields");
      list.push_back(ReadBlock(fields));
      continue;
    }
    std::string eq;
    if (!(ls >> eq) || eq != "=") Fail(line_no, "expected 'key = value'");
    if (key == "format") {
      std::string v;
      ls >> v;
      if (v != kFormatName) Fail(line_no, "unknown format '" + v + "'");
      saw_format = true;
    } else if (key == "vocabulary_version") {
      int v = 0;
      if (!(ls >> v)) Fail(line_no, "bad vocabulary version");
      if (v != Vocabulary::kVersion) {
        Fail(line_no, "vocabulary version " + std::to_string(v) +
                          " is not supported");
      }
      saw_version = true;
    } else if (key == "relative_output_dims") {
      std::vector<double> dims;
      double d;
      while (ls >> d) dims.push_back(d);
      if (dims.empty()) Fail(line_no, "empty relative_output_dims");
      if (output_dims != nullptr) *output_dims = dims;
    } else if (key == "seed") {
      ls >> seed_name;
      if (seed_name == "-") seed_name.clear();
    } else if (key == "generation") {
      if (!(ls >> generation)) Fail(line_no, "bad generation");
    } else {
      Fail(line_no, "unknown key '" + key + "'");
    }
  }
  if (!closed) Fail(line_no, "unterminated genome");
  if (!saw_format || !saw_version) Fail(line_no, "missing format header");
  return Genome(std::move(modality), std::move(fusion), std::move(seed_name),
                generation);
}

std::uint64_t Fingerprint(const Genome& genome) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 1099511628211ULL;
    }
  };
  const GenomeLayout layout = genome.layout();
  mix(layout.modality_blocks.size());
  for (int b : layout.modality_blocks) mix(static_cast<std::uint64_t>(b));
  mix(static_cast<std::uint64_t>(layout.fusion_blocks));
  for (int f : genome.Encode()) mix(static_cast<std::uint64_t>(f));
  return h;
}

}  // namespace fusearch
