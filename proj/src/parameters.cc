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

#include "fusearch/parameters.h"

#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

namespace fusearch {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'F', 'S', 'P', 'A', 'R', 'A', 'M', 'S'};
constexpr std::uint32_t kVersion = 1;

template <typename V>
void Put(std::ostream& out, V v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V Get(std::istream& in) {
  V v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(V))) {
    throw FormatError("parameter checkpoint truncated");
  }
  return v;
}

}  // namespace

template <typename T>
int ParameterStore<T>::Add(const std::string& name, std::vector<int> shape, Init init) {
  if (Find(name) >= 0) throw ContractViolation("duplicate parameter " + name);
  Entry e;
  e.name = name;
  e.value = Tensor<T>(shape);
  e.grad = Tensor<T>(shape);
  switch (init) {
    case Init::kZeros: break;
    case Init::kOnes: e.value.Fill(T(1)); break;
    case Init::kTruncatedNormal: {
      std::normal_distribution<double> normal(0.0, 0.02);
      for (std::size_t i = 0; i < e.value.size(); ++i) {
        double v;
        do {
          v = normal(rng_);
        } while (std::abs(v) > 0.04);
        e.value[i] = static_cast<T>(v);
      }
      break;
    }
  }
  entries_.push_back(std::move(e));
  return size() - 1;
}

template <typename T>
int ParameterStore<T>::AddBuffer(const std::string& name, Tensor<T> value) {
  if (Find(name) >= 0) throw ContractViolation("duplicate parameter " + name);
  Entry e;
  e.name = name;
  e.value = std::move(value);
  e.trainable = false;
  entries_.push_back(std::move(e));
  return size() - 1;
}

template <typename T>
int ParameterStore<T>::Find(const std::string& name) const {
  for (int i = 0; i < size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  return -1;
}

template <typename T>
std::int64_t ParameterStore<T>::TrainableScalarCount() const {
  std::int64_t n = 0;
  for (const Entry& e : entries_) {
    if (e.trainable) n += static_cast<std::int64_t>(e.value.size());
  }
  return n;
}

template <typename T>
void ParameterStore<T>::ZeroGrad() {
  for (Entry& e : entries_) {
    if (e.trainable) e.grad.Fill(T(0));
  }
}

template <typename T>
void ParameterStore<T>::Save(std::ostream& out) const {
  out.write(kMagic, sizeof(kMagic));
  Put<std::uint32_t>(out, kVersion);
  Put<std::uint32_t>(out, sizeof(T));
  Put<std::uint32_t>(out, static_cast<std::uint32_t>(entries_.size()));
  for (const Entry& e : entries_) {
    Put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    Put<std::uint8_t>(out, e.trainable ? 1 : 0);
    Put<std::uint32_t>(out, static_cast<std::uint32_t>(e.value.rank()));
    for (int d : e.value.shape()) Put<std::int32_t>(out, d);
    out.write(reinterpret_cast<const char*>(e.value.data()),
              static_cast<std::streamsize>(e.value.size() * sizeof(T)));
  }
}

template <typename T>
void ParameterStore<T>::Load(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw FormatError("not a parameter checkpoint");
  }
  if (Get<std::uint32_t>(in) != kVersion) throw FormatError("unsupported checkpoint version");
  if (Get<std::uint32_t>(in) != sizeof(T)) throw FormatError("checkpoint scalar width differs");
  const std::uint32_t count = Get<std::uint32_t>(in);
  if (count != entries_.size()) throw FormatError("checkpoint entry count differs");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = Get<std::uint32_t>(in);
    if (len > 4096) throw FormatError("checkpoint name too long");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw FormatError("parameter checkpoint truncated");
    const int idx = Find(name);
    if (idx < 0) throw FormatError("unknown parameter " + name);
    Entry& e = entries_[idx];
    if ((Get<std::uint8_t>(in) != 0) != e.trainable) {
      throw FormatError("trainable flag differs for " + name);
    }
    const std::uint32_t rank = Get<std::uint32_t>(in);
    std::vector<int> shape(rank);
    for (auto& d : shape) d = Get<std::int32_t>(in);
    if (shape != e.value.shape()) throw FormatError("shape differs for " + name);
    if (!in.read(reinterpret_cast<char*>(e.value.data()),
                 static_cast<std::streamsize>(e.value.size() * sizeof(T)))) {
      throw FormatError("parameter checkpoint truncated");
    }
  }
}

template class ParameterStore<float>;
template class ParameterStore<double>;

}  // namespace fusearch
