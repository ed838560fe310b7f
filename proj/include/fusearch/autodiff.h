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

// Tape-based reverse-mode differentiation.
//
// A Tape records values in creation order. Each recorded value may carry a
// closure that pushes its gradient to its inputs. Backward() walks the tape
// from the root towards the first entry, so closures run in exact reverse
// topological order and gradients from several consumers simply add up.
//
// Ops live in Ops<T> as static functions over tape ids. They are instantiated
// for float (search) and double (gradient checks).

#ifndef FUSEARCH_AUTODIFF_H_
#define FUSEARCH_AUTODIFF_H_

#include <functional>
#include <string>
#include <vector>

#include "fusearch/tensor.h"

namespace fusearch {

template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&)>;

  // A value that receives no gradient.
  int Constant(Tensor<T> value);
  // A leaf that accumulates a gradient readable through grad().
  int Variable(Tensor<T> value);
  // A leaf that aliases `*value` (no copy). When `sink` is non-null the leaf's
  // gradient is added into it during Backward. Both must outlive the tape.
  int External(const Tensor<T>* value, Tensor<T>* sink);
  // An op result. `fn` runs during Backward if any input needs a gradient.
  int Record(Tensor<T> value, const std::vector<int>& inputs, BackwardFn fn);

  const Tensor<T>& value(int id) const;
  // Gradient buffer for `id`, allocated as zeros on first use.
  Tensor<T>& grad(int id);
  bool has_grad(int id) const;
  bool requires_grad(int id) const;
  int size() const { return static_cast<int>(entries_.size()); }

  // Seeds d(root) with `seed` (ones when null) and propagates. Throws
  // ContractViolation on an empty tape, an unknown root, or a second call.
  void Backward(int root, const Tensor<T>* seed = nullptr);

  void Clear();

 private:
  struct Entry {
    Tensor<T> value;
    const Tensor<T>* external = nullptr;
    Tensor<T>* sink = nullptr;
    Tensor<T> grad;
    bool grad_allocated = false;
    bool requires_grad = false;
    BackwardFn backward;
  };
  Entry& entry(int id);
  const Entry& entry(int id) const;

  std::vector<Entry> entries_;
  bool backward_done_ = false;
};

enum class PoolKind { kMax, kAverage };

template <typename T>
struct Ops {
  // Activations.
  static int Relu(Tape<T>& tape, int x);
  static int LeakyRelu(Tape<T>& tape, int x, T slope = T(0.01));
  static int Swish(Tape<T>& tape, int x);
  static int Sigmoid(Tape<T>& tape, int x);

  // Last-axis combiners. Operands share all leading dims; the narrower
  // operand is zero-padded for Add and Mul.
  static int Add(Tape<T>& tape, int a, int b);
  static int Mul(Tape<T>& tape, int a, int b);
  static int Concat(Tape<T>& tape, const std::vector<int>& parts);

  // x[..., in] * w[in, out] + bias[out]; bias may be -1.
  static int Linear(Tape<T>& tape, int x, int w, int bias);

  // Causal convolutions over (B, T, C): output t sees inputs t-k+1 .. t.
  // Standard: w[k, in, out], bias[out].
  static int CausalConv(Tape<T>& tape, int x, int w, int bias);
  // Depthwise: w[k, C], no bias.
  static int DepthwiseCausalConv(Tape<T>& tape, int x, int w);
  // Lightweight: w[G, k], softmax-normalised over taps; channel c uses kernel
  // floor(c * G / C).
  static int LightweightConv(Tape<T>& tape, int x, int w);

  // Scaled dot-product attention over time, q/k/v of shape (B, T, inner),
  // split into `heads` equal slices. No mask.
  static int Attention(Tape<T>& tape, int q, int k, int v, int heads);
  // Softmax probabilities of the last Attention call's scores are not kept;
  // this helper recomputes them for tests: (B, heads, T, T).
  static Tensor<T> AttentionWeights(const Tensor<T>& q, const Tensor<T>& k, int heads);

  // Causal stride-1 pooling with a window of `k` steps (truncated at t < k-1;
  // the average divides by the number of steps actually in the window).
  static int Pool(Tape<T>& tape, int x, int k, PoolKind kind);

  // Normalisation over the last axis, then gamma * xhat + beta.
  static int LayerNorm(Tape<T>& tape, int x, int gamma, int beta, T eps = T(1e-5));
  // Normalisation over all leading rows. Training mode uses batch statistics
  // and updates running_mean / running_var with `momentum`; evaluation mode
  // uses the running statistics.
  static int BatchNorm(Tape<T>& tape, int x, int gamma, int beta, Tensor<T>* running_mean,
                       Tensor<T>* running_var, bool training, T momentum = T(0.1),
                       T eps = T(1e-5));

  // (B, T, C) -> (B, C).
  static int MeanOverTime(Tape<T>& tape, int x);
  // Row-mean of embedding rows per (b, t) bag; empty bags give zeros.
  // bags.size() == B * T, row-major over (b, t).
  static int EmbeddingBagMean(Tape<T>& tape, int table, const std::vector<std::vector<int>>& bags,
                              int batch, int length);
  // Mean softmax cross-entropy of logits (B, K) against labels.
  static int SoftmaxCrossEntropy(Tape<T>& tape, int logits, const std::vector<int>& labels);
  // Sum of all elements, shape (1).
  static int Sum(Tape<T>& tape, int x);
};

extern template class Tape<float>;
extern template class Tape<double>;
extern template struct Ops<float>;
extern template struct Ops<double>;

}  // namespace fusearch

#endif  // FUSEARCH_AUTODIFF_H_
