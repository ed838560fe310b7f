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

#ifndef FUSEARCH_TESTS_TEST_UTIL_H_
#define FUSEARCH_TESTS_TEST_UTIL_H_

#include <random>
#include <vector>

#include "fusearch/genome.h"
#include "fusearch/search_space.h"

namespace fusearch::testing {

// Uniformly random legal genome for `layout`.
inline Genome RandomGenome(const GenomeLayout& layout, std::mt19937_64& rng,
                           const Vocabulary& vocab = Vocabulary::Default()) {
  std::vector<int> fields;
  for (const BlockRef& ref : layout.blocks()) {
    for (int f = 0; f < BlockGene::kFieldCount; ++f) {
      const int n = FieldChoices(layout, ref, f, vocab);
      const int base =
          FieldKindAt(f) == FieldKind::kInput ? layout.first_input(ref) : 0;
      fields.push_back(base + std::uniform_int_distribution<int>(0, n - 1)(rng));
    }
  }
  return Genome::Decode(layout, fields, "random", 0);
}

inline GenomeLayout ReferenceLayout() { return GenomeLayout{{3, 3, 3}, 5}; }

}  // namespace fusearch::testing

#endif  // FUSEARCH_TESTS_TEST_UTIL_H_
