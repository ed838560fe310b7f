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

#ifndef FUSEARCH_PARAMETERS_H_
#define FUSEARCH_PARAMETERS_H_

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "fusearch/tensor.h"

namespace fusearch {

enum class Init { kZeros, kOnes, kTruncatedNormal };

// Named tensors. Trainable entries own a gradient slot of the same shape;
// buffers (batch-norm running statistics) do not count as parameters.
template <typename T>
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    bool trainable = true;
  };

  explicit ParameterStore(std::uint64_t seed = 0) : rng_(seed) {}

  // Truncated normal draws use std 0.02 and resample beyond two deviations.
  int Add(const std::string& name, std::vector<int> shape, Init init);
  int AddBuffer(const std::string& name, Tensor<T> value);

  int size() const { return static_cast<int>(entries_.size()); }
  Entry& at(int i) { return entries_.at(i); }
  const Entry& at(int i) const { return entries_.at(i); }
  // -1 when absent.
  int Find(const std::string& name) const;

  std::int64_t TrainableScalarCount() const;
  void ZeroGrad();

  // Binary checkpoint, little-endian:
  //   magic "FSPARAMS" (8 bytes), u32 version (1), u32 scalar bytes (4|8),
  //   u32 entry count, then per entry: u32 name length, name bytes,
  //   u8 trainable, u32 rank, rank x i32 dims, raw scalars.
  void Save(std::ostream& out) const;
  // Restores values by name into an identically structured store; throws
  // FormatError on any mismatch.
  void Load(std::istream& in);

 private:
  std::vector<Entry> entries_;
  std::mt19937_64 rng_;
};

extern template class ParameterStore<float>;
extern template class ParameterStore<double>;

}  // namespace fusearch

#endif  // FUSEARCH_PARAMETERS_H_
