// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>

#include "mrnode/diffgraph.hpp"
#include "mrnode/layers.hpp"
#include "mrnode/selftest.hpp"

using namespace mrnode;
using ad::Binder;
using ad::Parameter;
using ad::Tape;
using ad::Tensor;

namespace {

Tensor randn(ad::Shape shape, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(ad::numel(shape));
  for (auto& x : v) x = n(rng);
  return Tensor::constant(std::move(shape), std::move(v));
}

}  // namespace

TEST(Ops, MatmulIdentity) {
  std::mt19937_64 rng(1);
  const Tensor a = randn({3, 5}, rng);
  const Tensor i3 = Tensor::constant({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  const Tensor r = ad::matmul(i3, a);
  ASSERT_EQ(r.shape(), a.shape());
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(r[k], a[k]);
}

TEST(Ops, ActivationsAtZero) {
  const Tensor z = Tensor::scalar(0.0);
  EXPECT_EQ(ad::tanh(z).item(), 0.0);
  EXPECT_EQ(ad::sigmoid(z).item(), 0.5);
  EXPECT_EQ(ad::exp(z).item(), 1.0);
  EXPECT_EQ(ad::log(Tensor::scalar(1.0)).item(), 0.0);
}

TEST(Ops, ConcatShape) {
  const Tensor c = ad::concat({Tensor::zeros({2, 3}), Tensor::zeros({2, 4})}, 1);
  EXPECT_EQ(c.shape(), (ad::Shape{2, 7}));
  const Tensor r = ad::concat({Tensor::zeros({2, 3}), Tensor::zeros({5, 3})}, 0);
  EXPECT_EQ(r.shape(), (ad::Shape{7, 3}));
}

TEST(Ops, ShapeMismatchNamesBothShapes) {
  try {
    ad::add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2}));
    FAIL() << "expected a shape error";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[3,2]"), std::string::npos) << msg;
  }
  EXPECT_THROW(ad::matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
}

TEST(Backward, SumGivesOnes) {
  Parameter p("p", {2, 3}, {1, 2, 3, 4, 5, 6});
  Tape tape;
  tape.backward(ad::sum(Binder(&tape)(p)));
  for (double g : p.grad) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SumOfSquaresGivesTwoP) {
  Parameter p("p", {2, 2}, {1.5, -2, 0.25, 3});
  Tape tape;
  const Tensor x = Binder(&tape)(p);
  tape.backward(ad::sum(ad::mul(x, x)));
  for (std::size_t i = 0; i < p.value.size(); ++i) EXPECT_EQ(p.grad[i], 2.0 * p.value[i]);
}

TEST(Backward, NonScalarLossRejected) {
  Parameter p("p", {2, 2}, {1, 2, 3, 4});
  Tape tape;
  const Tensor x = Binder(&tape)(p);
  EXPECT_THROW(tape.backward(x), ContractError);
}

TEST(Backward, GraphReleasedAndStaleTensorsRejected) {
  Parameter p("p", {1, 3}, {1, 2, 3});
  Tape tape;
  const Tensor x = Binder(&tape)(p);
  const Tensor loss = ad::sum(ad::tanh(x));
  EXPECT_GT(tape.node_count(), 0u);
  tape.backward(loss);
  EXPECT_EQ(tape.node_count(), 0u);
  EXPECT_THROW(ad::sum(x), ContractError);
  // A new graph of the same size reuses nothing from the old one.
  const Tensor y = Binder(&tape)(p);
  tape.backward(ad::sum(ad::tanh(y)));
  EXPECT_EQ(tape.node_count(), 0u);
}

TEST(Backward, ConcatAndSliceArePartitionExact) {
  std::mt19937_64 rng(3);
  const Tensor ia = randn({2, 3}, rng), ib = randn({2, 4}, rng);
  Parameter a("a", {2, 3}, {ia.values().begin(), ia.values().end()});
  Parameter b("b", {2, 4}, {ib.values().begin(), ib.values().end()});
  const Tensor wa = randn({2, 3}, rng), wb = randn({2, 4}, rng);

  {
    Tape tape;
    const Binder bind(&tape);
    const Tensor c = ad::concat({bind(a), bind(b)}, 1);
    const Tensor loss = ad::add(ad::sum(ad::mul(ad::tanh(ad::slice(c, 1, 0, 3)), wa)),
                                ad::sum(ad::mul(ad::tanh(ad::slice(c, 1, 3, 7)), wb)));
    tape.backward(loss);
  }
  const auto ga = a.grad, gb = b.grad;
  a.zero_grad();
  b.zero_grad();
  {
    Tape tape;
    const Binder bind(&tape);
    tape.backward(ad::sum(ad::mul(ad::tanh(bind(a)), wa)));
  }
  {
    Tape tape;
    const Binder bind(&tape);
    tape.backward(ad::sum(ad::mul(ad::tanh(bind(b)), wb)));
  }
  EXPECT_EQ(ga, a.grad);
  EXPECT_EQ(gb, b.grad);
}

TEST(Backward, TwoLayerMlpMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    nn::MLP m("m", {4, 6, 3}, rng);
    for (auto& l : m.layers)
      for (auto& v : l.bias.value) v = std::normal_distribution<double>(0.0, 0.3)(rng);
    const Tensor x = randn({5, 4}, rng), w = randn({5, 3}, rng);
    std::vector<Parameter*> ps;
    m.collect(ps);
    const auto r = ad::gradcheck(ps, [&](Tape* t) { return ad::sum(ad::mul(m(x, Binder(t)), w)); });
    EXPECT_LE(r.max_rel_error, 1e-4) << "seed " << seed << " worst " << r.worst;
    EXPECT_EQ(r.checked, 4u * 6 + 6 + 6 * 3 + 3);
  }
}

TEST(Backward, InputGradients) {
  Tape tape;
  const Tensor x = tape.input({1, 2}, {3.0, -1.0});
  std::vector<std::vector<double>> g;
  tape.backward(ad::sum(ad::square(x)), &g);
  ASSERT_EQ(g.size(), 1u);
  EXPECT_EQ(g[0], (std::vector<double>{6.0, -2.0}));
}

TEST(Layers, GradientSuitePasses) {
  for (const auto& c : selftest::gradient_suite(10)) EXPECT_TRUE(c.passed) << c.name << ": " << c.detail;
}

TEST(Layers, ZeroWeightRnnKeepsZeroState) {
  std::mt19937_64 rng(1);
  nn::RNNCell c("r", 3, 4, rng);
  std::fill(c.wx.value.begin(), c.wx.value.end(), 0.0);
  std::fill(c.wh.value.begin(), c.wh.value.end(), 0.0);
  Tensor h = Tensor::zeros({1, 4});
  for (int k = 0; k < 5; ++k) h = c(randn({1, 3}, rng), h, Binder{});
  for (double v : h.values()) EXPECT_EQ(v, 0.0);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Parameter p("p", {3}, {1.0, -2.0, 0.5});
  const auto before = p.value;
  ad::Adam opt({0.1});
  opt.step({&p});
  EXPECT_EQ(p.value, before);
}

TEST(Adam, FirstStepHasMagnitudeLr) {
  Parameter p("x", {1}, {1.0});
  Tape tape;
  const Tensor x = Binder(&tape)(p);
  tape.backward(ad::sum(ad::square(x)));
  ad::Adam opt({0.1});
  opt.step({&p});
  EXPECT_NEAR(p.value[0], 0.9, 1e-7);
}

TEST(Adam, DeterministicAcrossRuns) {
  auto run = [] {
    std::mt19937_64 rng(9);
    nn::MLP m("m", {2, 5, 1}, rng);
    std::vector<Parameter*> ps;
    m.collect(ps);
    ad::Adam opt({0.01});
    const Tensor x = randn({8, 2}, rng), y = randn({8, 1}, rng);
    for (int step = 0; step < 30; ++step) {
      ad::zero_grad(ps);
      Tape tape;
      tape.backward(ad::mean(ad::square(ad::sub(m(x, Binder(&tape)), y))));
      opt.step(ps);
    }
    std::vector<double> out;
    for (auto* p : ps) out.insert(out.end(), p->value.begin(), p->value.end());
    return out;
  };
  EXPECT_EQ(run(), run());
}
