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

#include <sstream>

#include "doctest.h"
#include "fusearch/autodiff.h"
#include "fusearch/executor.h"
#include "fusearch/parameters.h"
#include "gradcheck.h"
#include "test_util.h"

namespace fusearch {
namespace {

using D = Ops<double>;
using testing::CheckGraph;
using testing::CheckOp;
using testing::RandomTensor;
using testing::SingleBranchGenome;

const Vocabulary& V() { return Vocabulary::Default(); }

TEST_CASE("activation examples") {
  Tape<double> tape;
  const int x = tape.Constant(Tensor<double>({3}, {-1.0, 0.0, 2.0}));
  CHECK(tape.value(D::Relu(tape, x)).values() == std::vector<double>{0, 0, 2});
  const auto leaky = tape.value(D::LeakyRelu(tape, x)).values();
  CHECK(leaky[0] == doctest::Approx(-0.01));
  CHECK(leaky[2] == 2.0);
  const auto swish = tape.value(D::Swish(tape, x)).values();
  CHECK(swish[1] == 0.0);
  CHECK(swish[2] == doctest::Approx(2.0 / (1.0 + std::exp(-2.0))));
}

TEST_CASE("layer norm of a constant vector is zero before scale and shift") {
  Tape<double> tape;
  const int x = tape.Constant(Tensor<double>({1, 1, 5}, 3.25));
  const int g = tape.Constant(Tensor<double>({5}, 1.0));
  const int b = tape.Constant(Tensor<double>({5}, 0.0));
  for (double v : tape.value(D::LayerNorm(tape, x, g, b)).values()) CHECK(v == 0.0);
}

TEST_CASE("identity sum gradient is all ones") {
  Tape<double> tape;
  std::mt19937_64 rng(1);
  const int x = tape.Variable(RandomTensor({2, 3, 4}, rng));
  tape.Backward(D::Sum(tape, x));
  for (double g : tape.grad(x).values()) CHECK(g == 1.0);
}

TEST_CASE("fan-out accumulates both paths") {
  Tape<double> tape;
  std::mt19937_64 rng(2);
  const Tensor<double> xv = RandomTensor({2, 3}, rng);
  const int x = tape.Variable(xv);
  // loss = sum(x * x) + sum(x): gradient 2x + 1.
  const int loss = D::Add(tape, D::Sum(tape, D::Mul(tape, x, x)), D::Sum(tape, x));
  tape.Backward(loss);
  for (std::size_t i = 0; i < xv.size(); ++i) {
    CHECK(tape.grad(x)[i] == doctest::Approx(2 * xv[i] + 1));
  }
}

TEST_CASE("backward contract") {
  Tape<double> empty;
  CHECK_THROWS_AS(empty.Backward(0), ContractViolation);
  Tape<double> tape;
  const int x = tape.Variable(Tensor<double>({1}, 1.0));
  CHECK_THROWS_AS(tape.Backward(5), ContractViolation);
  tape.Backward(x);
  CHECK_THROWS_AS(tape.Backward(x), ContractViolation);
}

TEST_CASE("shape mismatches are contract violations") {
  Tape<double> tape;
  const int a = tape.Constant(Tensor<double>({2, 3, 4}));
  const int b = tape.Constant(Tensor<double>({2, 5, 4}));
  CHECK_THROWS_AS(D::Add(tape, a, b), ContractViolation);
  const int w = tape.Constant(Tensor<double>({5, 2}));
  CHECK_THROWS_AS(D::Linear(tape, a, w, -1), ContractViolation);

  const ComputationGraph g = Compile(SeedGenome(FusionKind::kHybrid, 2), {4, 4}, 3);
  ParameterStore<double> store;
  GraphNetwork<double> net(g, &store);
  const int good = tape.Constant(Tensor<double>({2, 3, 4}));
  const int bad = tape.Constant(Tensor<double>({2, 3, 5}));
  try {
    net.Forward(tape, {good, bad}, true);
    FAIL("expected a contract violation");
  } catch (const ContractViolation& e) {
    CHECK(std::string(e.what()).find("node ") == 0);
  }
}

TEST_CASE("the gradient checker catches a wrong backward pass") {
  std::mt19937_64 rng(8);
  // y = 2x with a backward pass that claims dy/dx = 2.001.
  const auto r = CheckOp(
      [](Tape<double>& t, const std::vector<int>& v) {
        Tensor<double> y = t.value(v[0]);
        for (auto& e : y.values()) e *= 2;
        const int x = v[0];
        const int id = t.size();
        return t.Record(std::move(y), {x}, [x, id](Tape<double>& tt) {
          for (std::size_t i = 0; i < tt.grad(x).size(); ++i) {
            tt.grad(x)[i] += 2.001 * tt.grad(id)[i];
          }
        });
      },
      {RandomTensor({2, 3}, rng)}, 1);
  CHECK(r.checked == 6);
  CHECK(r.max_relative_error > 1e-4);
}

TEST_CASE("primitive gradients") {
  std::mt19937_64 rng(3);
  const auto x = RandomTensor({2, 4, 6}, rng);
  struct Case {
    const char* name;
    testing::OpFn f;
    std::vector<Tensor<double>> in;
  };
  const std::vector<Case> cases = {
      {"linear", [](auto& t, auto& v) { return D::Linear(t, v[0], v[1], v[2]); },
       {x, RandomTensor({6, 5}, rng), RandomTensor({5}, rng)}},
      {"conv k3", [](auto& t, auto& v) { return D::CausalConv(t, v[0], v[1], v[2]); },
       {x, RandomTensor({3, 6, 4}, rng), RandomTensor({4}, rng)}},
      {"conv k7 > length",
       [](auto& t, auto& v) { return D::CausalConv(t, v[0], v[1], -1); },
       {x, RandomTensor({7, 6, 2}, rng)}},
      {"depthwise", [](auto& t, auto& v) { return D::DepthwiseCausalConv(t, v[0], v[1]); },
       {x, RandomTensor({5, 6}, rng)}},
      {"lightweight", [](auto& t, auto& v) { return D::LightweightConv(t, v[0], v[1]); },
       {x, RandomTensor({4, 3}, rng)}},
      {"attention", [](auto& t, auto& v) { return D::Attention(t, v[0], v[1], v[2], 2); },
       {x, RandomTensor({2, 4, 6}, rng), RandomTensor({2, 4, 6}, rng)}},
      {"max pool", [](auto& t, auto& v) { return D::Pool(t, v[0], 3, PoolKind::kMax); }, {x}},
      {"avg pool", [](auto& t, auto& v) { return D::Pool(t, v[0], 5, PoolKind::kAverage); },
       {x}},
      {"layer norm", [](auto& t, auto& v) { return D::LayerNorm(t, v[0], v[1], v[2]); },
       {x, RandomTensor({6}, rng), RandomTensor({6}, rng)}},
      {"padded add", [](auto& t, auto& v) { return D::Add(t, v[0], v[1]); },
       {x, RandomTensor({2, 4, 3}, rng)}},
      {"padded mul", [](auto& t, auto& v) { return D::Mul(t, v[0], v[1]); },
       {RandomTensor({2, 4, 3}, rng), x}},
      {"concat", [](auto& t, auto& v) { return D::Concat(t, {v[0], v[1], v[0]}); },
       {x, RandomTensor({2, 4, 2}, rng)}},
      {"sigmoid", [](auto& t, auto& v) { return D::Sigmoid(t, v[0]); }, {x}},
      {"swish", [](auto& t, auto& v) { return D::Swish(t, v[0]); }, {x}},
      {"mean over time", [](auto& t, auto& v) { return D::MeanOverTime(t, v[0]); }, {x}},
      {"cross entropy",
       [](auto& t, auto& v) { return D::SoftmaxCrossEntropy(t, v[0], {1, 4, 0}); },
       {RandomTensor({3, 5}, rng)}},
      {"embedding bag",
       [](auto& t, auto& v) {
         return D::EmbeddingBagMean(t, v[0], {{0, 2}, {}, {1, 1, 3}, {2}}, 2, 2);
       },
       {RandomTensor({4, 3}, rng)}},
  };
  for (const Case& c : cases) {
    CAPTURE(c.name);
    const auto r = CheckOp(c.f, c.in, 11);
    CAPTURE(r.worst);
    CHECK(r.max_relative_error < 1e-4);
  }
  SUBCASE("batch norm, train and eval") {
    for (bool training : {true, false}) {
      Tensor<double> mean({6}), var({6}, 1.0);
      mean[2] = 0.3;
      var[4] = 2.0;
      const auto r = CheckOp(
          [&](auto& t, auto& v) {
            Tensor<double> m = mean, s = var;  // each call sees fresh statistics
            return D::BatchNorm(t, v[0], v[1], v[2], &m, &s, training);
          },
          {x, RandomTensor({6}, rng), RandomTensor({6}, rng)}, 5);
      CHECK(r.max_relative_error < 1e-4);
    }
  }
}

TEST_CASE("every vocabulary entry passes a graph-level gradient check") {
  const int none_norm = V().NormalizationIndex(Normalization::kNone);
  const int none_act = V().ActivationIndex(Activation::kNone);
  const int identity = V().LayerIndex(LayerKind::kIdentity);
  const int dim2 = V().DimIndex(2.0);
  for (int seed = 0; seed < 3; ++seed) {
    for (int layer = 0; layer < V().layer_count(); ++layer) {
      if (V().layers[layer].kind == LayerKind::kDeadBranch) continue;
      CAPTURE(V().layers[layer].name);
      CAPTURE(seed);
      const Genome g = SingleBranchGenome(none_norm, layer, dim2, none_act);
      const auto r = CheckGraph(Compile(g, {6}, 4), 2, seed);
      CAPTURE(r.worst);
      CHECK(r.max_relative_error < 1e-4);
    }
    for (int norm = 0; norm < V().normalization_count(); ++norm) {
      for (bool training : {true, false}) {
        const auto r = CheckGraph(
            Compile(SingleBranchGenome(norm, identity, 1, none_act), {6}, 4), 2, seed, training);
        CHECK(r.max_relative_error < 1e-4);
      }
    }
    for (int act = 0; act < V().activation_count(); ++act) {
      const auto r =
          CheckGraph(Compile(SingleBranchGenome(none_norm, identity, 1, act), {6}, 4), 2, seed);
      CHECK(r.max_relative_error < 1e-4);
    }
    for (int comb = 0; comb < V().combiner_count(); ++comb) {
      const BlockGene b{{0, none_norm, V().LayerIndex(LayerKind::kConv, 1), dim2, none_act},
                        {0, none_norm, identity, 1, none_act}, comb};
      const auto r = CheckGraph(Compile(Genome({{}}, {b}), {6}, 4), 2, seed);
      CHECK(r.max_relative_error < 1e-4);
    }
  }
}

TEST_CASE("attention softmax rows sum to one") {
  std::mt19937_64 rng(4);
  const auto q = RandomTensor({2, 5, 8}, rng, 3.0);
  const auto k = RandomTensor({2, 5, 8}, rng, 3.0);
  const auto p = Ops<double>::AttentionWeights(q, k, 4);
  for (std::size_t row = 0; row < p.size() / 5; ++row) {
    double s = 0;
    for (int j = 0; j < 5; ++j) s += p[row * 5 + j];
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
}

TEST_CASE("layers preserve length") {
  for (int layer = 0; layer < V().layer_count(); ++layer) {
    if (V().layers[layer].kind == LayerKind::kDeadBranch) continue;
    const Genome g = SingleBranchGenome(2, layer, 3, 3);
    const ComputationGraph cg = Compile(g, {5}, 7);
    ParameterStore<float> store(1);
    GraphNetwork<float> net(cg, &store);
    Tape<float> tape;
    const int x = tape.Constant(Tensor<float>({3, 7, 5}, 0.5f));
    const Tensor<float>& y = tape.value(net.Forward(tape, {x}, true));
    CHECK(y.dim(0) == 3);
    CHECK(y.dim(1) == 7);
    CHECK(y.dim(2) == cg.output_width());
    for (float v : y.values()) CHECK(std::isfinite(v));
  }
}

TEST_CASE("forward is deterministic per seed") {
  const ComputationGraph g = Compile(SeedGenome(FusionKind::kHybrid, 3), {4, 6, 8}, 5);
  auto run = [&](std::uint64_t seed) {
    ParameterStore<double> store(seed);
    GraphNetwork<double> net(g, &store);
    std::mt19937_64 rng(9);
    Tape<double> tape;
    std::vector<int> in;
    for (int w : g.input_widths) in.push_back(tape.Constant(RandomTensor({2, 5, w}, rng)));
    return tape.value(net.Forward(tape, in, true));
  };
  CHECK(run(5) == run(5));
  CHECK_FALSE(run(5) == run(6));
}

TEST_CASE("batch norm eval mode uses frozen statistics") {
  const Genome g = SingleBranchGenome(V().NormalizationIndex(Normalization::kBatchNorm),
                                      V().LayerIndex(LayerKind::kIdentity), 1, 3);
  const ComputationGraph cg = Compile(g, {4}, 3);
  ParameterStore<double> store(0);
  GraphNetwork<double> net(cg, &store);
  std::mt19937_64 rng(5);
  const auto xv = RandomTensor({4, 3, 4}, rng, 2.0);
  auto forward = [&](bool training) {
    Tape<double> tape;
    return tape.value(net.Forward(tape, {tape.Constant(xv)}, training));
  };
  const int mean_idx = store.Find("g.n1.mean");
  REQUIRE(mean_idx >= 0);
  const auto before = store.at(mean_idx).value;
  const auto eval1 = forward(false);
  CHECK(store.at(mean_idx).value == before);
  const auto train = forward(true);
  CHECK_FALSE(store.at(mean_idx).value == before);
  CHECK_FALSE(train == eval1);
  const auto eval2 = forward(false);
  CHECK(eval2 == forward(false));
}

TEST_CASE("instantiated scalars equal the analytic parameter count") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const Genome genome = testing::RandomGenome(testing::ReferenceLayout(), rng);
    const ComputationGraph g = Compile(genome, {4, 6, 8}, 3);
    ParameterStore<float> store(trial);
    GraphNetwork<float> net(g, &store);
    CHECK(store.TrainableScalarCount() == CountParameters(g));
    CHECK(net.parameter_count() == g.parameter_count);
  }
}

TEST_CASE("parameter checkpoint round trip") {
  const ComputationGraph g = Compile(SeedGenome(FusionKind::kHybrid, 2), {4, 4}, 3);
  ParameterStore<float> a(1), b(2);
  GraphNetwork<float> na(g, &a), nb(g, &b);
  std::stringstream buf;
  a.Save(buf);
  b.Load(buf);
  for (int i = 0; i < a.size(); ++i) CHECK(a.at(i).value == b.at(i).value);

  std::stringstream truncated(buf.str().substr(0, 40));
  CHECK_THROWS_AS(b.Load(truncated), FormatError);
  std::stringstream garbage("not a checkpoint at all");
  CHECK_THROWS_AS(b.Load(garbage), FormatError);
  ParameterStore<double> wide(0);
  GraphNetwork<double> nw(g, &wide);
  std::stringstream again;
  a.Save(again);
  CHECK_THROWS_AS(wide.Load(again), FormatError);
}

TEST_CASE("truncated normal init stays within two deviations") {
  ParameterStore<double> store(3);
  const int i = store.Add("w", {1000}, Init::kTruncatedNormal);
  double sum = 0;
  for (double v : store.at(i).value.values()) {
    CHECK(std::abs(v) <= 0.04);
    sum += v;
  }
  CHECK(std::abs(sum / 1000) < 0.005);
}

}  // namespace
}  // namespace fusearch
