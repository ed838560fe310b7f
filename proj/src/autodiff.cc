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

#include "fusearch/autodiff.h"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace fusearch {

namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<Mat<T>>;
template <typename T>
using CMapM = Eigen::Map<const Mat<T>>;
template <typename T>
using VecRow = Eigen::Matrix<T, 1, Eigen::Dynamic>;
// Column slice [offset, offset + width) of a row-major (rows x stride) block.
template <typename T>
using Strided = Eigen::Map<Mat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using CStrided = Eigen::Map<const Mat<T>, 0, Eigen::OuterStride<>>;

[[noreturn]] void Fail(const std::string& op, const std::string& what) {
  throw ContractViolation(op + ": " + what);
}

template <typename T>
void RequireRank(const Tensor<T>& t, int rank, const char* op) {
  if (t.rank() != rank) {
    Fail(op, "expected rank " + std::to_string(rank) + ", got shape " +
                 Tensor<T>::ShapeString(t.shape()));
  }
}

template <typename T>
bool SameLeading(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != b.rank() || a.rank() == 0) return false;
  return std::equal(a.shape().begin(), a.shape().end() - 1, b.shape().begin());
}

std::vector<int> WithLast(const std::vector<int>& shape, int last) {
  std::vector<int> s = shape;
  s.back() = last;
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tape

template <typename T>
typename Tape<T>::Entry& Tape<T>::entry(int id) {
  if (id < 0 || id >= size()) Fail("tape", "unknown id " + std::to_string(id));
  return entries_[id];
}

template <typename T>
const typename Tape<T>::Entry& Tape<T>::entry(int id) const {
  if (id < 0 || id >= size()) Fail("tape", "unknown id " + std::to_string(id));
  return entries_[id];
}

template <typename T>
int Tape<T>::Constant(Tensor<T> value) {
  Entry e;
  e.value = std::move(value);
  entries_.push_back(std::move(e));
  return size() - 1;
}

template <typename T>
int Tape<T>::Variable(Tensor<T> value) {
  Entry e;
  e.value = std::move(value);
  e.requires_grad = true;
  entries_.push_back(std::move(e));
  return size() - 1;
}

template <typename T>
int Tape<T>::External(const Tensor<T>* value, Tensor<T>* sink) {
  Entry e;
  e.external = value;
  e.sink = sink;
  e.requires_grad = sink != nullptr;
  entries_.push_back(std::move(e));
  return size() - 1;
}

template <typename T>
int Tape<T>::Record(Tensor<T> value, const std::vector<int>& inputs, BackwardFn fn) {
  Entry e;
  e.value = std::move(value);
  for (int i : inputs) e.requires_grad = e.requires_grad || entry(i).requires_grad;
  if (e.requires_grad) e.backward = std::move(fn);
  entries_.push_back(std::move(e));
  return size() - 1;
}

template <typename T>
const Tensor<T>& Tape<T>::value(int id) const {
  const Entry& e = entry(id);
  return e.external ? *e.external : e.value;
}

template <typename T>
Tensor<T>& Tape<T>::grad(int id) {
  Entry& e = entry(id);
  if (!e.grad_allocated) {
    e.grad = Tensor<T>(value(id).shape());
    e.grad_allocated = true;
  }
  return e.grad;
}

template <typename T>
bool Tape<T>::has_grad(int id) const {
  return entry(id).grad_allocated;
}

template <typename T>
bool Tape<T>::requires_grad(int id) const {
  return entry(id).requires_grad;
}

template <typename T>
void Tape<T>::Backward(int root, const Tensor<T>* seed) {
  if (entries_.empty()) Fail("backward", "nothing has been recorded");
  if (backward_done_) Fail("backward", "already ran on this tape");
  if (root < 0 || root >= size()) Fail("backward", "unknown root " + std::to_string(root));
  backward_done_ = true;
  Tensor<T>& g = grad(root);
  if (seed) {
    if (seed->shape() != g.shape()) Fail("backward", "seed shape mismatch");
    g = *seed;
  } else {
    g.Fill(T(1));
  }
  for (int i = root; i >= 0; --i) {
    Entry& e = entries_[i];
    if (!e.requires_grad || !e.grad_allocated) continue;
    if (e.backward) e.backward(*this);
    if (e.sink) {
      if (e.sink->shape() != e.grad.shape()) Fail("backward", "gradient sink shape mismatch");
      for (std::size_t j = 0; j < e.grad.size(); ++j) (*e.sink)[j] += e.grad[j];
    }
  }
}

template <typename T>
void Tape<T>::Clear() {
  entries_.clear();
  backward_done_ = false;
}

// ---------------------------------------------------------------------------
// Activations

template <typename T>
int Ops<T>::Relu(Tape<T>& tape, int x) {
  const Tensor<T>& xv = tape.value(x);
  Tensor<T> y(xv.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] > T(0) ? xv[i] : T(0);
  int id = tape.size();
  return tape.Record(std::move(y), {x}, [x, id](Tape<T>& t) {
    const Tensor<T>& xv = t.value(x);
    const Tensor<T>& dy = t.grad(id);
    Tensor<T>& dx = t.grad(x);
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (xv[i] > T(0)) dx[i] += dy[i];
    }
  });
}

template <typename T>
int Ops<T>::LeakyRelu(Tape<T>& tape, int x, T slope) {
  const Tensor<T>& xv = tape.value(x);
  Tensor<T> y(xv.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] > T(0) ? xv[i] : slope * xv[i];
  int id = tape.size();
  return tape.Record(std::move(y), {x}, [x, id, slope](Tape<T>& t) {
    const Tensor<T>& xv = t.value(x);
    const Tensor<T>& dy = t.grad(id);
    Tensor<T>& dx = t.grad(x);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += xv[i] > T(0) ? dy[i] : slope * dy[i];
  });
}

namespace {
template <typename T>
T Logistic(T v) {
  return v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
}
}  // namespace

template <typename T>
int Ops<T>::Sigmoid(Tape<T>& tape, int x) {
  const Tensor<T>& xv = tape.value(x);
  Tensor<T> y(xv.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = Logistic(xv[i]);
  int id = tape.size();
  return tape.Record(std::move(y), {x}, [x, id](Tape<T>& t) {
    const Tensor<T>& yv = t.value(id);
    const Tensor<T>& dy = t.grad(id);
    Tensor<T>& dx = t.grad(x);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * yv[i] * (T(1) - yv[i]);
  });
}

template <typename T>
int Ops<T>::Swish(Tape<T>& tape, int x) {
  const Tensor<T>& xv = tape.value(x);
  Tensor<T> y(xv.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] * Logistic(xv[i]);
  int id = tape.size();
  return tape.Record(std::move(y), {x}, [x, id](Tape<T>& t) {
    const Tensor<T>& xv = t.value(x);
    const Tensor<T>& dy = t.grad(id);
    Tensor<T>& dx = t.grad(x);
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const T s = Logistic(xv[i]);
      dx[i] += dy[i] * (s + xv[i] * s * (T(1) - s));
    }
  });
}

// ---------------------------------------------------------------------------
// Combiners

template <typename T>
int Ops<T>::Add(Tape<T>& tape, int a, int b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  if (!SameLeading(av, bv)) Fail("add", "leading dimensions differ");
  const int ca = av.cols(), cb = bv.cols(), c = std::max(ca, cb);
  const std::size_t rows = av.rows();
  Tensor<T> y(WithLast(av.shape(), c));
  for (std::size_t r = 0; r < rows; ++r) {
    T* yr = y.data() + r * c;
    const T* ar = av.data() + r * ca;
    const T* br = bv.data() + r * cb;
    for (int j = 0; j < ca; ++j) yr[j] += ar[j];
    for (int j = 0; j < cb; ++j) yr[j] += br[j];
  }
  int id = tape.size();
  return tape.Record(std::move(y), {a, b}, [a, b, id, ca, cb, c, rows](Tape<T>& t) {
    const Tensor<T>& dy = t.grad(id);
    for (auto [in, w] : {std::pair{a, ca}, std::pair{b, cb}}) {
      if (!t.requires_grad(in)) continue;
      Tensor<T>& d = t.grad(in);
      for (std::size_t r = 0; r < rows; ++r) {
        for (int j = 0; j < w; ++j) d[r * w + j] += dy[r * c + j];
      }
    }
  });
}

template <typename T>
int Ops<T>::Mul(Tape<T>& tape, int a, int b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  if (!SameLeading(av, bv)) Fail("mul", "leading dimensions differ");
  const int ca = av.cols(), cb = bv.cols(), c = std::max(ca, cb), m = std::min(ca, cb);
  const std::size_t rows = av.rows();
  // Padding with zeros makes every channel past the narrower width zero.
  Tensor<T> y(WithLast(av.shape(), c));
  for (std::size_t r = 0; r < rows; ++r) {
    for (int j = 0; j < m; ++j) y[r * c + j] = av[r * ca + j] * bv[r * cb + j];
  }
  int id = tape.size();
  return tape.Record(std::move(y), {a, b}, [a, b, id, ca, cb, c, m, rows](Tape<T>& t) {
    const Tensor<T>& dy = t.grad(id);
    const Tensor<T>& av = t.value(a);
    const Tensor<T>& bv = t.value(b);
    if (t.requires_grad(a)) {
      Tensor<T>& da = t.grad(a);
      for (std::size_t r = 0; r < rows; ++r) {
        for (int j = 0; j < m; ++j) da[r * ca + j] += dy[r * c + j] * bv[r * cb + j];
      }
    }
    if (t.requires_grad(b)) {
      Tensor<T>& db = t.grad(b);
      for (std::size_t r = 0; r < rows; ++r) {
        for (int j = 0; j < m; ++j) db[r * cb + j] += dy[r * c + j] * av[r * ca + j];
      }
    }
  });
}

template <typename T>
int Ops<T>::Concat(Tape<T>& tape, const std::vector<int>& parts) {
  if (parts.empty()) Fail("concat", "no operands");
  const Tensor<T>& first = tape.value(parts[0]);
  std::vector<int> widths;
  int c = 0;
  for (int p : parts) {
    const Tensor<T>& v = tape.value(p);
    if (!SameLeading(first, v)) Fail("concat", "leading dimensions differ");
    widths.push_back(v.cols());
    c += v.cols();
  }
  const std::size_t rows = first.rows();
  Tensor<T> y(WithLast(first.shape(), c));
  int offset = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Tensor<T>& v = tape.value(parts[i]);
    const int w = widths[i];
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(v.data() + r * w, w, y.data() + r * c + offset);
    }
    offset += w;
  }
  int id = tape.size();
  return tape.Record(std::move(y), parts, [parts, widths, id, c, rows](Tape<T>& t) {
    const Tensor<T>& dy = t.grad(id);
    int offset = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      const int w = widths[i];
      if (t.requires_grad(parts[i])) {
        Tensor<T>& d = t.grad(parts[i]);
        for (std::size_t r = 0; r < rows; ++r) {
          for (int j = 0; j < w; ++j) d[r * w + j] += dy[r * c + offset + j];
        }
      }
      offset += w;
    }
  });
}

// ---------------------------------------------------------------------------
// Dense and convolutional layers

template <typename T>
int Ops<T>::Linear(Tape<T>& tape, int x, int w, int bias) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& wv = tape.value(w);
  RequireRank(wv, 2, "linear");
  const int in = wv.dim(0), out = wv.dim(1);
  if (xv.cols() != in) Fail("linear", "input width " + std::to_string(xv.cols()) +
                                          " != weight rows " + std::to_string(in));
  const Eigen::Index rows = static_cast<Eigen::Index>(xv.rows());
  Tensor<T> y(WithLast(xv.shape(), out));
  MapM<T> Y(y.data(), rows, out);
  Y.noalias() = CMapM<T>(xv.data(), rows, in) * CMapM<T>(wv.data(), in, out);
  if (bias >= 0) {
    const Tensor<T>& bv = tape.value(bias);
    if (bv.size() != static_cast<std::size_t>(out)) Fail("linear", "bias width mismatch");
    Y.rowwise() += Eigen::Map<const VecRow<T>>(bv.data(), out);
  }
  int id = tape.size();
  std::vector<int> inputs = {x, w};
  if (bias >= 0) inputs.push_back(bias);
  return tape.Record(std::move(y), inputs, [x, w, bias, id, in, out, rows](Tape<T>& t) {
    CMapM<T> dY(t.grad(id).data(), rows, out);
    if (t.requires_grad(x)) {
      MapM<T>(t.grad(x).data(), rows, in).noalias() +=
          dY * CMapM<T>(t.value(w).data(), in, out).transpose();
    }
    if (t.requires_grad(w)) {
      MapM<T>(t.grad(w).data(), in, out).noalias() +=
          CMapM<T>(t.value(x).data(), rows, in).transpose() * dY;
    }
    if (bias >= 0 && t.requires_grad(bias)) {
      Eigen::Map<VecRow<T>>(t.grad(bias).data(), out) += dY.colwise().sum();
    }
  });
}

template <typename T>
int Ops<T>::CausalConv(Tape<T>& tape, int x, int w, int bias) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& wv = tape.value(w);
  RequireRank(xv, 3, "conv");
  RequireRank(wv, 3, "conv");
  const int B = xv.dim(0), L = xv.dim(1), in = xv.dim(2);
  const int k = wv.dim(0), out = wv.dim(2);
  if (wv.dim(1) != in) Fail("conv", "input width mismatch");
  Tensor<T> y({B, L, out});
  for (int j = 0; j < k; ++j) {
    const int s = k - 1 - j;  // tap j looks s steps back
    if (s >= L) continue;
    CMapM<T> W(wv.data() + static_cast<std::size_t>(j) * in * out, in, out);
    for (int b = 0; b < B; ++b) {
      CMapM<T> X(xv.data() + static_cast<std::size_t>(b) * L * in, L, in);
      MapM<T> Y(y.data() + static_cast<std::size_t>(b) * L * out, L, out);
      Y.bottomRows(L - s).noalias() += X.topRows(L - s) * W;
    }
  }
  if (bias >= 0) {
    const Tensor<T>& bv = tape.value(bias);
    if (bv.size() != static_cast<std::size_t>(out)) Fail("conv", "bias width mismatch");
    MapM<T>(y.data(), static_cast<Eigen::Index>(B) * L, out).rowwise() +=
        Eigen::Map<const VecRow<T>>(bv.data(), out);
  }
  int id = tape.size();
  std::vector<int> inputs = {x, w};
  if (bias >= 0) inputs.push_back(bias);
  return tape.Record(std::move(y), inputs, [=](Tape<T>& t) {
    const Tensor<T>& dy = t.grad(id);
    const Tensor<T>& xv = t.value(x);
    const Tensor<T>& wv = t.value(w);
    const bool need_x = t.requires_grad(x), need_w = t.requires_grad(w);
    for (int j = 0; j < k; ++j) {
      const int s = k - 1 - j;
      if (s >= L) continue;
      CMapM<T> W(wv.data() + static_cast<std::size_t>(j) * in * out, in, out);
      for (int b = 0; b < B; ++b) {
        CMapM<T> dY(dy.data() + static_cast<std::size_t>(b) * L * out, L, out);
        if (need_x) {
          MapM<T> dX(t.grad(x).data() + static_cast<std::size_t>(b) * L * in, L, in);
          dX.topRows(L - s).noalias() += dY.bottomRows(L - s) * W.transpose();
        }
        if (need_w) {
          CMapM<T> X(xv.data() + static_cast<std::size_t>(b) * L * in, L, in);
          MapM<T> dW(t.grad(w).data() + static_cast<std::size_t>(j) * in * out, in, out);
          dW.noalias() += X.topRows(L - s).transpose() * dY.bottomRows(L - s);
        }
      }
    }
    if (bias >= 0 && t.requires_grad(bias)) {
      Eigen::Map<VecRow<T>>(t.grad(bias).data(), out) +=
          CMapM<T>(dy.data(), static_cast<Eigen::Index>(B) * L, out).colwise().sum();
    }
  });
}

template <typename T>
int Ops<T>::DepthwiseCausalConv(Tape<T>& tape, int x, int w) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& wv = tape.value(w);
  RequireRank(xv, 3, "depthwise conv");
  RequireRank(wv, 2, "depthwise conv");
  const int B = xv.dim(0), L = xv.dim(1), C = xv.dim(2), k = wv.dim(0);
  if (wv.dim(1) != C) Fail("depthwise conv", "channel mismatch");
  Tensor<T> y({B, L, C});
  for (int b = 0; b < B; ++b) {
    for (int t = 0; t < L; ++t) {
      T* yr = &y.at(b, t, 0);
      for (int j = 0; j < k; ++j) {
        const int src = t - (k - 1 - j);
        if (src < 0) continue;
        const T* xr = &xv.at(b, src, 0);
        const T* wr = wv.data() + static_cast<std::size_t>(j) * C;
        for (int c = 0; c < C; ++c) yr[c] += wr[c] * xr[c];
      }
    }
  }
  int id = tape.size();
  return tape.Record(std::move(y), {x, w}, [=](Tape<T>& t) {
    const Tensor<T>& dy = t.grad(id);
    const Tensor<T>& xv = t.value(x);
    const Tensor<T>& wv = t.value(w);
    const bool need_x = t.requires_grad(x), need_w = t.requires_grad(w);
    for (int b = 0; b < B; ++b) {
      for (int tt = 0; tt < L; ++tt) {
        const T* dyr = &dy.at(b, tt, 0);
        for (int j = 0; j < k; ++j) {
          const int src = tt - (k - 1 - j);
          if (src < 0) continue;
          if (need_x) {
            T* dxr = &t.grad(x).at(b, src, 0);
            const T* wr = wv.data() + static_cast<std::size_t>(j) * C;
            for (int c = 0; c < C; ++c) dxr[c] += wr[c] * dyr[c];
          }
          if (need_w) {
            T* dwr = t.grad(w).data() + static_cast<std::size_t>(j) * C;
            const T* xr = &xv.at(b, src, 0);
            for (int c = 0; c < C; ++c) dwr[c] += xr[c] * dyr[c];
          }
        }
      }
    }
  });
}

template <typename T>
int Ops<T>::LightweightConv(Tape<T>& tape, int x, int w) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& wv = tape.value(w);
  RequireRank(xv, 3, "lightweight conv");
  RequireRank(wv, 2, "lightweight conv");
  const int B = xv.dim(0), L = xv.dim(1), C = xv.dim(2);
  const int G = wv.dim(0), k = wv.dim(1);
  if (G < 1 || G > C) Fail("lightweight conv", "group count must be in [1, channels]");
  // Softmax over taps per group.
  auto probs = std::make_shared<std::vector<T>>(static_cast<std::size_t>(G) * k);
  for (int g = 0; g < G; ++g) {
    const T* wr = wv.data() + static_cast<std::size_t>(g) * k;
    T mx = *std::max_element(wr, wr + k), z = 0;
    for (int j = 0; j < k; ++j) z += ((*probs)[g * k + j] = std::exp(wr[j] - mx));
    for (int j = 0; j < k; ++j) (*probs)[g * k + j] /= z;
  }
  std::vector<int> group(C);
  for (int c = 0; c < C; ++c) group[c] = static_cast<int>(static_cast<long>(c) * G / C);
  Tensor<T> y({B, L, C});
  for (int b = 0; b < B; ++b) {
    for (int t = 0; t < L; ++t) {
      T* yr = &y.at(b, t, 0);
      for (int j = 0; j < k; ++j) {
        const int src = t - (k - 1 - j);
        if (src < 0) continue;
        const T* xr = &xv.at(b, src, 0);
        for (int c = 0; c < C; ++c) yr[c] += (*probs)[group[c] * k + j] * xr[c];
      }
    }
  }
  int id = tape.size();
  return tape.Record(std::move(y), {x, w}, [=](Tape<T>& t) {
    const Tensor<T>& dy = t.grad(id);
    const Tensor<T>& xv = t.value(x);
    const std::vector<T>& p = *probs;
    std::vector<T> dp(static_cast<std::size_t>(G) * k, T(0));
    const bool need_x = t.requires_grad(x);
    for (int b = 0; b < B; ++b) {
      for (int tt = 0; tt < L; ++tt) {
        const T* dyr = &dy.at(b, tt, 0);
        for (int j = 0; j < k; ++j) {
          const int src = tt - (k - 1 - j);
          if (src < 0) continue;
          const T* xr = &xv.at(b, src, 0);
          T* dxr = need_x ? &t.grad(x).at(b, src, 0) : nullptr;
          for (int c = 0; c < C; ++c) {
            const int gi = group[c] * k + j;
            dp[gi] += dyr[c] * xr[c];
            if (dxr) dxr[c] += p[gi] * dyr[c];
          }
        }
      }
    }
    if (t.requires_grad(w)) {
      Tensor<T>& dw = t.grad(w);
      for (int g = 0; g < G; ++g) {
        T dot = 0;
        for (int j = 0; j < k; ++j) dot += p[g * k + j] * dp[g * k + j];
        for (int j = 0; j < k; ++j) dw[g * k + j] += p[g * k + j] * (dp[g * k + j] - dot);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Attention

template <typename T>
Tensor<T> Ops<T>::AttentionWeights(const Tensor<T>& q, const Tensor<T>& k, int heads) {
  const int B = q.dim(0), L = q.dim(1), inner = q.dim(2), d = inner / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(d));
  Tensor<T> p({B, heads, L, L});
  for (int b = 0; b < B; ++b) {
    for (int h = 0; h < heads; ++h) {
      const std::size_t base = static_cast<std::size_t>(b) * L * inner + h * d;
      CStrided<T> Q(q.data() + base, L, d, Eigen::OuterStride<>(inner));
      CStrided<T> K(k.data() + base, L, d, Eigen::OuterStride<>(inner));
      MapM<T> P(p.data() + (static_cast<std::size_t>(b) * heads + h) * L * L, L, L);
      P.noalias() = (Q * K.transpose()) * scale;
      for (int r = 0; r < L; ++r) {
        auto row = P.row(r);
        row.array() -= row.maxCoeff();
        row = row.array().exp().matrix();
        row /= row.sum();
      }
    }
  }
  return p;
}

template <typename T>
int Ops<T>::Attention(Tape<T>& tape, int q, int k, int v, int heads) {
  const Tensor<T>& qv = tape.value(q);
  const Tensor<T>& kv = tape.value(k);
  const Tensor<T>& vv = tape.value(v);
  RequireRank(qv, 3, "attention");
  if (qv.shape() != kv.shape() || qv.shape() != vv.shape()) {
    Fail("attention", "q, k, v shapes differ");
  }
  const int B = qv.dim(0), L = qv.dim(1), inner = qv.dim(2);
  if (heads < 1 || inner % heads != 0) Fail("attention", "width not divisible by heads");
  const int d = inner / heads;
  auto probs = std::make_shared<Tensor<T>>(AttentionWeights(qv, kv, heads));
  Tensor<T> y({B, L, inner});
  for (int b = 0; b < B; ++b) {
    for (int h = 0; h < heads; ++h) {
      const std::size_t base = static_cast<std::size_t>(b) * L * inner + h * d;
      CMapM<T> P(probs->data() + (static_cast<std::size_t>(b) * heads + h) * L * L, L, L);
      CStrided<T> V(vv.data() + base, L, d, Eigen::OuterStride<>(inner));
      Strided<T> O(y.data() + base, L, d, Eigen::OuterStride<>(inner));
      O.noalias() = P * V;
    }
  }
  int id = tape.size();
  return tape.Record(std::move(y), {q, k, v}, [=](Tape<T>& t) {
    const T scale = T(1) / std::sqrt(static_cast<T>(d));
    const Tensor<T>& dy = t.grad(id);
    const Tensor<T>& qv = t.value(q);
    const Tensor<T>& kv = t.value(k);
    const Tensor<T>& vv = t.value(v);
    Mat<T> dP(L, L), dS(L, L);
    for (int b = 0; b < B; ++b) {
      for (int h = 0; h < heads; ++h) {
        const std::size_t base = static_cast<std::size_t>(b) * L * inner + h * d;
        const Eigen::OuterStride<> st(inner);
        CMapM<T> P(probs->data() + (static_cast<std::size_t>(b) * heads + h) * L * L, L, L);
        CStrided<T> dO(dy.data() + base, L, d, st);
        CStrided<T> V(vv.data() + base, L, d, st);
        if (t.requires_grad(v)) {
          Strided<T>(t.grad(v).data() + base, L, d, st).noalias() += P.transpose() * dO;
        }
        dP.noalias() = dO * V.transpose();
        // Softmax backward per row.
        const Eigen::Matrix<T, Eigen::Dynamic, 1> dots = (dP.array() * P.array()).rowwise().sum();
        dS = P.array() * (dP.colwise() - dots).array();
        if (t.requires_grad(q)) {
          CStrided<T> K(kv.data() + base, L, d, st);
          Strided<T>(t.grad(q).data() + base, L, d, st).noalias() += (dS * K) * scale;
        }
        if (t.requires_grad(k)) {
          CStrided<T> Q(qv.data() + base, L, d, st);
          Strided<T>(t.grad(k).data() + base, L, d, st).noalias() +=
              (dS.transpose() * Q) * scale;
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Pooling

template <typename T>
int Ops<T>::Pool(Tape<T>& tape, int x, int k, PoolKind kind) {
  const Tensor<T>& xv = tape.value(x);
  RequireRank(xv, 3, "pool");
  if (k < 1) Fail("pool", "window must be positive");
  const int B = xv.dim(0), L = xv.dim(1), C = xv.dim(2);
  Tensor<T> y({B, L, C});
  auto argmax = std::make_shared<std::vector<int>>();
  if (kind == PoolKind::kMax) argmax->assign(y.size(), 0);
  for (int b = 0; b < B; ++b) {
    for (int t = 0; t < L; ++t) {
      const int lo = std::max(0, t - k + 1);
      for (int c = 0; c < C; ++c) {
        if (kind == PoolKind::kMax) {
          int best = lo;
          for (int s = lo + 1; s <= t; ++s) {
            if (xv.at(b, s, c) > xv.at(b, best, c)) best = s;
          }
          y.at(b, t, c) = xv.at(b, best, c);
          (*argmax)[(static_cast<std::size_t>(b) * L + t) * C + c] = best;
        } else {
          T sum = 0;
          for (int s = lo; s <= t; ++s) sum += xv.at(b, s, c);
          y.at(b, t, c) = sum / static_cast<T>(t - lo + 1);
        }
      }
    }
  }
  int id = tape.size();
  return tape.Record(std::move(y), {x}, [=](Tape<T>& t) {
    const Tensor<T>& dy = t.grad(id);
    Tensor<T>& dx = t.grad(x);
    for (int b = 0; b < B; ++b) {
      for (int tt = 0; tt < L; ++tt) {
        const int lo = std::max(0, tt - k + 1);
        for (int c = 0; c < C; ++c) {
          const T g = dy.at(b, tt, c);
          if (kind == PoolKind::kMax) {
            dx.at(b, (*argmax)[(static_cast<std::size_t>(b) * L + tt) * C + c], c) += g;
          } else {
            const T share = g / static_cast<T>(tt - lo + 1);
            for (int s = lo; s <= tt; ++s) dx.at(b, s, c) += share;
          }
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Normalisation

template <typename T>
int Ops<T>::LayerNorm(Tape<T>& tape, int x, int gamma, int beta, T eps) {
  const Tensor<T>& xv = tape.value(x);
  const int C = xv.cols();
  const std::size_t rows = xv.rows();
  if (tape.value(gamma).size() != static_cast<std::size_t>(C) ||
      tape.value(beta).size() != static_cast<std::size_t>(C)) {
    Fail("layer norm", "scale/shift width mismatch");
  }
  auto xhat = std::make_shared<std::vector<T>>(xv.size());
  auto inv = std::make_shared<std::vector<T>>(rows);
  const T* gv = tape.value(gamma).data();
  const T* bv = tape.value(beta).data();
  Tensor<T> y(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xv.data() + r * C;
    T mean = 0;
    for (int c = 0; c < C; ++c) mean += xr[c];
    mean /= C;
    T var = 0;
    for (int c = 0; c < C; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= C;
    const T is = T(1) / std::sqrt(var + eps);
    (*inv)[r] = is;
    for (int c = 0; c < C; ++c) {
      const T h = (xr[c] - mean) * is;
      (*xhat)[r * C + c] = h;
      y[r * C + c] = gv[c] * h + bv[c];
    }
  }
  int id = tape.size();
  return tape.Record(std::move(y), {x, gamma, beta}, [=](Tape<T>& t) {
    const Tensor<T>& dy = t.grad(id);
    const T* gv = t.value(gamma).data();
    const bool need_x = t.requires_grad(x);
    const bool need_g = t.requires_grad(gamma), need_b = t.requires_grad(beta);
    std::vector<T> dh(C);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* dyr = dy.data() + r * C;
      const T* hr = xhat->data() + r * C;
      if (need_g || need_b) {
        for (int c = 0; c < C; ++c) {
          if (need_g) t.grad(gamma)[c] += dyr[c] * hr[c];
          if (need_b) t.grad(beta)[c] += dyr[c];
        }
      }
      if (!need_x) continue;
      T sum = 0, dot = 0;
      for (int c = 0; c < C; ++c) {
        dh[c] = dyr[c] * gv[c];
        sum += dh[c];
        dot += dh[c] * hr[c];
      }
      T* dxr = t.grad(x).data() + r * C;
      const T scale = (*inv)[r] / C;
      for (int c = 0; c < C; ++c) dxr[c] += scale * (C * dh[c] - sum - hr[c] * dot);
    }
  });
}

template <typename T>
int Ops<T>::BatchNorm(Tape<T>& tape, int x, int gamma, int beta, Tensor<T>* running_mean,
                      Tensor<T>* running_var, bool training, T momentum, T eps) {
  const Tensor<T>& xv = tape.value(x);
  const int C = xv.cols();
  const std::size_t rows = xv.rows();
  if (tape.value(gamma).size() != static_cast<std::size_t>(C) ||
      running_mean->size() != static_cast<std::size_t>(C) ||
      running_var->size() != static_cast<std::size_t>(C)) {
    Fail("batch norm", "statistics width mismatch");
  }
  if (training && rows < 1) Fail("batch norm", "empty batch");
  std::vector<T> mean(C, T(0)), var(C, T(0));
  if (training) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (int c = 0; c < C; ++c) mean[c] += xv[r * C + c];
    }
    for (int c = 0; c < C; ++c) mean[c] /= static_cast<T>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      for (int c = 0; c < C; ++c) {
        const T d = xv[r * C + c] - mean[c];
        var[c] += d * d;
      }
    }
    for (int c = 0; c < C; ++c) {
      const T biased = var[c] / static_cast<T>(rows);
      const T unbiased = rows > 1 ? var[c] / static_cast<T>(rows - 1) : biased;
      (*running_mean)[c] = (T(1) - momentum) * (*running_mean)[c] + momentum * mean[c];
      (*running_var)[c] = (T(1) - momentum) * (*running_var)[c] + momentum * unbiased;
      var[c] = biased;
    }
  } else {
    mean = running_mean->values();
    var = running_var->values();
  }
  auto inv = std::make_shared<std::vector<T>>(C);
  for (int c = 0; c < C; ++c) (*inv)[c] = T(1) / std::sqrt(var[c] + eps);
  auto xhat = std::make_shared<std::vector<T>>(xv.size());
  const T* gv = tape.value(gamma).data();
  const T* bv = tape.value(beta).data();
  Tensor<T> y(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    for (int c = 0; c < C; ++c) {
      const T h = (xv[r * C + c] - mean[c]) * (*inv)[c];
      (*xhat)[r * C + c] = h;
      y[r * C + c] = gv[c] * h + bv[c];
    }
  }
  int id = tape.size();
  return tape.Record(std::move(y), {x, gamma, beta}, [=](Tape<T>& t) {
    const Tensor<T>& dy = t.grad(id);
    const T* gv = t.value(gamma).data();
    std::vector<T> sum(C, T(0)), dot(C, T(0));
    for (std::size_t r = 0; r < rows; ++r) {
      for (int c = 0; c < C; ++c) {
        sum[c] += dy[r * C + c];
        dot[c] += dy[r * C + c] * (*xhat)[r * C + c];
      }
    }
    if (t.requires_grad(gamma)) {
      for (int c = 0; c < C; ++c) t.grad(gamma)[c] += dot[c];
    }
    if (t.requires_grad(beta)) {
      for (int c = 0; c < C; ++c) t.grad(beta)[c] += sum[c];
    }
    if (!t.requires_grad(x)) return;
    Tensor<T>& dx = t.grad(x);
    const T n = static_cast<T>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      for (int c = 0; c < C; ++c) {
        const T g = dy[r * C + c] * gv[c];
        if (training) {
          dx[r * C + c] += gv[c] * (*inv)[c] / n *
                           (n * dy[r * C + c] - sum[c] - (*xhat)[r * C + c] * dot[c]);
        } else {
          dx[r * C + c] += g * (*inv)[c];
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Model plumbing

template <typename T>
int Ops<T>::MeanOverTime(Tape<T>& tape, int x) {
  const Tensor<T>& xv = tape.value(x);
  RequireRank(xv, 3, "mean over time");
  const int B = xv.dim(0), L = xv.dim(1), C = xv.dim(2);
  Tensor<T> y({B, C});
  for (int b = 0; b < B; ++b) {
    for (int t = 0; t < L; ++t) {
      for (int c = 0; c < C; ++c) y[static_cast<std::size_t>(b) * C + c] += xv.at(b, t, c);
    }
  }
  for (std::size_t i = 0; i < y.size(); ++i) y[i] /= static_cast<T>(L);
  int id = tape.size();
  return tape.Record(std::move(y), {x}, [=](Tape<T>& t) {
    const Tensor<T>& dy = t.grad(id);
    Tensor<T>& dx = t.grad(x);
    for (int b = 0; b < B; ++b) {
      for (int tt = 0; tt < L; ++tt) {
        for (int c = 0; c < C; ++c) {
          dx.at(b, tt, c) += dy[static_cast<std::size_t>(b) * C + c] / static_cast<T>(L);
        }
      }
    }
  });
}

template <typename T>
int Ops<T>::EmbeddingBagMean(Tape<T>& tape, int table,
                             const std::vector<std::vector<int>>& bags, int batch,
                             int length) {
  const Tensor<T>& tv = tape.value(table);
  RequireRank(tv, 2, "embedding");
  const int V = tv.dim(0), D = tv.dim(1);
  if (bags.size() != static_cast<std::size_t>(batch) * length) {
    Fail("embedding", "bag count does not match batch * length");
  }
  Tensor<T> y({batch, length, D});
  for (std::size_t i = 0; i < bags.size(); ++i) {
    if (bags[i].empty()) continue;
    const T w = T(1) / static_cast<T>(bags[i].size());
    T* yr = y.data() + i * D;
    for (int tok : bags[i]) {
      if (tok < 0 || tok >= V) Fail("embedding", "token id out of range");
      const T* row = tv.data() + static_cast<std::size_t>(tok) * D;
      for (int c = 0; c < D; ++c) yr[c] += w * row[c];
    }
  }
  int id = tape.size();
  return tape.Record(std::move(y), {table}, [table, id, bags, D](Tape<T>& t) {
    const Tensor<T>& dy = t.grad(id);
    Tensor<T>& dt = t.grad(table);
    for (std::size_t i = 0; i < bags.size(); ++i) {
      if (bags[i].empty()) continue;
      const T w = T(1) / static_cast<T>(bags[i].size());
      const T* dyr = dy.data() + i * D;
      for (int tok : bags[i]) {
        T* row = dt.data() + static_cast<std::size_t>(tok) * D;
        for (int c = 0; c < D; ++c) row[c] += w * dyr[c];
      }
    }
  });
}

template <typename T>
int Ops<T>::SoftmaxCrossEntropy(Tape<T>& tape, int logits, const std::vector<int>& labels) {
  const Tensor<T>& lv = tape.value(logits);
  RequireRank(lv, 2, "cross entropy");
  const int B = lv.dim(0), K = lv.dim(1);
  if (B == 0) Fail("cross entropy", "empty batch");
  if (labels.size() != static_cast<std::size_t>(B)) Fail("cross entropy", "label count");
  auto probs = std::make_shared<std::vector<T>>(lv.size());
  T loss = 0;
  for (int b = 0; b < B; ++b) {
    const T* row = lv.data() + static_cast<std::size_t>(b) * K;
    if (labels[b] < 0 || labels[b] >= K) Fail("cross entropy", "label out of range");
    const T mx = *std::max_element(row, row + K);
    T z = 0;
    for (int c = 0; c < K; ++c) z += std::exp(row[c] - mx);
    const T lse = mx + std::log(z);
    loss += lse - row[labels[b]];
    for (int c = 0; c < K; ++c) (*probs)[b * K + c] = std::exp(row[c] - lse);
  }
  Tensor<T> y({1}, {loss / static_cast<T>(B)});
  int id = tape.size();
  return tape.Record(std::move(y), {logits}, [=](Tape<T>& t) {
    const T g = t.grad(id)[0] / static_cast<T>(B);
    Tensor<T>& dl = t.grad(logits);
    for (int b = 0; b < B; ++b) {
      for (int c = 0; c < K; ++c) {
        dl[b * K + c] += g * ((*probs)[b * K + c] - (c == labels[b] ? T(1) : T(0)));
      }
    }
  });
}

template <typename T>
int Ops<T>::Sum(Tape<T>& tape, int x) {
  const Tensor<T>& xv = tape.value(x);
  T s = 0;
  for (std::size_t i = 0; i < xv.size(); ++i) s += xv[i];
  int id = tape.size();
  return tape.Record(Tensor<T>({1}, {s}), {x}, [x, id](Tape<T>& t) {
    const T g = t.grad(id)[0];
    Tensor<T>& dx = t.grad(x);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g;
  });
}

template class Tape<float>;
template class Tape<double>;
template struct Ops<float>;
template struct Ops<double>;

}  // namespace fusearch
