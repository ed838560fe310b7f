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

#ifndef FUSEARCH_EXECUTOR_H_
#define FUSEARCH_EXECUTOR_H_

#include <cstdint>
#include <string>
#include <vector>

#include "fusearch/autodiff.h"
#include "fusearch/graph.h"
#include "fusearch/parameters.h"

namespace fusearch {

// Runs a compiled graph on a tape. Construction registers every node's
// weights in `store` under "<prefix>.n<id>.<part>", in node order, so a fixed
// store seed gives a fixed initialisation.
//
// Weight layouts: conv w[k, in, out] + b[out]; separable conv depthwise
// dw[k, in] then pointwise pw[in, out] + b[out]; lightweight conv
// w[min(r, in), k]; attention wq/wk/wv[in, inner] + biases, wo[inner, out] +
// bo; GLU w1/w2[in, out] + biases; norms gamma/beta[width], and batch norm
// also keeps mean/var buffers.
template <typename T>
class GraphNetwork {
 public:
  GraphNetwork(ComputationGraph graph, ParameterStore<T>* store, std::string prefix = "g");

  // `inputs` are tape ids of (B, length, width_m) tensors, one per modality.
  // A fixed sinusoidal position signal is added to each before use. Returns
  // the output node's tape id, shape (B, length, output_width). Throws
  // ContractViolation naming the node on any shape mismatch.
  int Forward(Tape<T>& tape, const std::vector<int>& inputs, bool training);

  const ComputationGraph& graph() const { return graph_; }
  // Trainable scalars this network registered.
  std::int64_t parameter_count() const { return parameter_count_; }

  bool positional_signal = true;

 private:
  int Param(Tape<T>& tape, int store_index) const;

  ComputationGraph graph_;
  ParameterStore<T>* store_;
  std::vector<std::vector<int>> node_params_;
  std::int64_t parameter_count_ = 0;
};

// Sinusoidal signal of shape (length, width): even channels sin, odd cos.
template <typename T>
Tensor<T> PositionSignal(int length, int width);

extern template class GraphNetwork<float>;
extern template class GraphNetwork<double>;

}  // namespace fusearch

#endif  // FUSEARCH_EXECUTOR_H_
