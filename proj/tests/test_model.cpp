// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mrnode/model.hpp"
#include "mrnode/windows.hpp"

using namespace mrnode;
using ad::Binder;
using ad::Parameter;
using ad::Tensor;

namespace {

TrainConfig small_config(ModelKind kind = ModelKind::MrNode) {
  TrainConfig c;
  c.model.kind = kind;
  c.model.latent_dim = 4;
  c.model.encoder_hidden = 6;
  c.model.dynamics_hidden = {8};
  c.model.decoder_hidden = {5};
  c.model.baseline_hidden = 6;
  c.split_train = 0.5;
  c.split_val = 0.25;
  c.eval_stride = 10;
  return c;
}

std::shared_ptr<const PreparedDataset> prepared(const TrainConfig& c, std::size_t n = 1200) {
  const auto ds = generate_infection_series(synth_climate(21, n));
  const auto stats = compute_data_stats({&ds}, c.split_train, c.split_val);
  return std::make_shared<const PreparedDataset>(prepare_dataset("toy", ds, stats, c.split_train, c.split_val));
}

Parameter& param(std::vector<Parameter*> ps, const std::string& name) {
  for (auto* p : ps)
    if (p->name == name) return *p;
  throw std::runtime_error("no parameter " + name);
}

void zero_all(const std::vector<Parameter*>& ps) {
  for (auto* p : ps) std::fill(p->value.begin(), p->value.end(), 0.0);
}

class ModelTest : public ::testing::Test {
 protected:
  TrainConfig cfg = small_config();
  std::shared_ptr<const PreparedDataset> data = prepared(cfg);
  std::vector<Window> windows = make_windows(data, Phase::ExtrapolationTest, cfg);
  MrNodeModel model{cfg.model, 3};

  void SetUp() override { ASSERT_GE(windows.size(), 3u); }
};

}  // namespace

TEST_F(ModelTest, ZeroWeightsGivePosteriorBias) {
  auto ps = model.parameters();
  zero_all(ps);
  auto& bias = param(ps, "encoder.posterior.bias");
  for (std::size_t i = 0; i < bias.value.size(); ++i) bias.value[i] = 0.1 * static_cast<double>(i) - 0.3;
  const auto seq = ObservedSequence::from(windows.front());
  const auto post = model.encode({&seq}, Binder{});
  const std::size_t l = cfg.model.latent_dim;
  for (std::size_t i = 0; i < l; ++i) {
    EXPECT_EQ(post.mu[i], bias.value[i]);
    EXPECT_EQ(post.sigma[i], std::exp(bias.value[l + i]));
  }
}

TEST_F(ModelTest, IdenticalWindowsGiveIdenticalPosteriors) {
  const auto a = ObservedSequence::from(windows[0]), b = ObservedSequence::from(windows[0]);
  const auto post = model.encode({&a, &b}, Binder{});
  const std::size_t l = cfg.model.latent_dim;
  for (std::size_t i = 0; i < l; ++i) {
    EXPECT_EQ(post.mu[i], post.mu[l + i]);
    EXPECT_EQ(post.sigma[i], post.sigma[l + i]);
  }
}

TEST_F(ModelTest, EmptyWindowRejected) {
  ObservedSequence empty;
  EXPECT_THROW(model.encode({&empty}, Binder{}), ContractError);
}

TEST_F(ModelTest, DroppedValuesNeverReachTheEncoder) {
  std::mt19937_64 rng(4);
  for (double p : {0.3, 0.7, 0.9}) {
    Window w = apply_drop(windows[1], p, rng);
    Window scrambled = w;
    std::uniform_real_distribution<double> junk(-50.0, 50.0);
    for (std::size_t i = 0; i < w.encode_length; ++i)
      if (!w.mask[i])
        for (auto& v : scrambled.encode_obs[i]) v = junk(rng);
    const auto times = w.target_times;
    EXPECT_EQ(model.predict(w, times, {1.0, true}), model.predict(scrambled, times, {1.0, true}));
  }
}

TEST_F(ModelTest, ZeroNoiseSampleIsMean) {
  const auto seq = ObservedSequence::from(windows[0]);
  const auto post = model.encode({&seq}, Binder{});
  const Tensor z = MrNodeModel::sample_latent(post, Tensor::zeros(post.mu.shape()));
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_EQ(z[i], post.mu[i]);
  EXPECT_THROW(MrNodeModel::sample_latent(post, Tensor::zeros({2, 1})), ShapeError);
}

TEST_F(ModelTest, ClampedLogSigmaCollapsesToMean) {
  auto ps = model.parameters();
  auto& bias = param(ps, "encoder.posterior.bias");
  auto& weight = param(ps, "encoder.posterior.weight");
  const std::size_t l = cfg.model.latent_dim, h = cfg.model.encoder_hidden;
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = l; c < 2 * l; ++c) weight.value[r * 2 * l + c] = 0.0;
  for (std::size_t c = l; c < 2 * l; ++c) bias.value[c] = -1e6;
  const auto seq = ObservedSequence::from(windows[0]);
  const auto post = model.encode({&seq}, Binder{});
  const Tensor z = MrNodeModel::sample_latent(post, Tensor::constant(post.mu.shape(), std::vector<double>(l, 3.0)));
  for (std::size_t i = 0; i < l; ++i) {
    EXPECT_GT(post.sigma[i], 0.0);
    EXPECT_NEAR(z[i], post.mu[i], 1e-7);
  }
}

TEST_F(ModelTest, ZeroFinalDynamicsLayerFreezesTrajectory) {
  auto ps = model.parameters();
  auto& w = param(ps, "dynamics.1.weight");
  auto& b = param(ps, "dynamics.1.bias");
  std::fill(w.value.begin(), w.value.end(), 0.0);
  std::fill(b.value.begin(), b.value.end(), 0.0);
  const auto y = model.predict(windows[0], windows[0].target_times);
  for (double v : y) EXPECT_EQ(v, y.front());
}

TEST_F(ModelTest, DynamicsDependOnTimeOnlyThroughPredictors) {
  const Tensor z = Tensor::constant({1, 4}, {0.1, -0.2, 0.3, 0.0});
  const auto& w = windows[0];
  // Inside one grid interval w(t) is linear in t, so are the MLP inputs.
  const auto at = [&](double t) { return model.dynamics(z, MrNodeModel::lookup({&w}, t, {}), Binder{}); };
  const Tensor a = at(5.25), b = at(5.25);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
  const auto p0 = w.predictors_at(5.0, false), p1 = w.predictors_at(6.0, false), pm = w.predictors_at(5.5, false);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(pm[k], 0.5 * (p0[k] + p1[k]), 1e-12);
}

TEST_F(ModelTest, ZeroDecoderGivesBias) {
  auto ps = model.parameters();
  for (auto* p : ps)
    if (p->name.starts_with("decoder.")) std::fill(p->value.begin(), p->value.end(), 0.0);
  param(ps, "decoder.1.bias").value[0] = 0.42;
  const Tensor z = Tensor::constant({3, 4}, std::vector<double>(12, 0.7));
  const Tensor y = model.decode(z, Binder{});
  ASSERT_EQ(y.shape(), (ad::Shape{3, 1}));
  for (double v : y.values()) EXPECT_EQ(v, 0.42);
}

TEST_F(ModelTest, DecodeDependsOnlyOnZ) {
  const Tensor z = Tensor::constant({1, 4}, {0.3, 0.1, -0.4, 0.2});
  EXPECT_EQ(model.decode(z, Binder{}).item(), model.decode(z, Binder{}).item());
}

TEST_F(ModelTest, SingleOutputTimeDecodesZ0) {
  const auto y = model.predict(windows[0], {0.0});
  ASSERT_EQ(y.size(), 1u);
  const auto seq = ObservedSequence::from(windows[0]);
  const auto post = model.encode({&seq}, Binder{});
  EXPECT_EQ(y[0], model.decode(post.mu, Binder{}).item());
}

TEST_F(ModelTest, ExtrapolationRequestLength) {
  ASSERT_EQ(windows[0].encode_length, 100u);
  ASSERT_EQ(windows[0].target_times.size(), 250u);
  EXPECT_EQ(model.predict(windows[0], windows[0].target_times).size(), 250u);
  std::mt19937_64 rng(8);
  const Window d = apply_drop(windows[0], 0.7, rng);
  EXPECT_EQ(model.predict(d, d.target_times).size(), 250u);
}

TEST_F(ModelTest, ZeroNoiseForwardIsDeterministic) {
  const auto a = model.predict(windows[2], windows[2].target_times, {0.5, true});
  const auto b = model.predict(windows[2], windows[2].target_times, {0.5, true});
  EXPECT_EQ(a, b);
}

TEST_F(ModelTest, BatchedForwardMatchesSingleWindows) {
  std::mt19937_64 rng(12);
  std::vector<Window> ws = {windows[0], apply_drop(windows[1], 0.3, rng), windows[2]};
  std::vector<const Window*> ptrs;
  for (const auto& w : ws) ptrs.push_back(&w);
  const auto& times = ws[0].target_times;
  const Tensor y = model.forward(ptrs, times, Tensor::zeros({3, 4}), Binder{});
  for (std::size_t b = 0; b < 3; ++b) {
    const auto single = model.predict(ws[b], times);
    for (std::size_t t = 0; t < times.size(); ++t) EXPECT_NEAR(y[t * 3 + b], single[t], 1e-12);
  }
}

TEST_F(ModelTest, LatentTrajectoryIsContinuous) {
  const auto& w = windows[0];
  double prev = 1e300;
  for (double eps : {0.5, 0.25, 0.125, 0.0625}) {
    const auto y = model.predict(w, {0.0, 3.0, 3.0 + eps}, {eps, false});
    const double d = std::abs(y[2] - y[1]);
    EXPECT_LE(d, prev + 1e-12);
    prev = d;
  }
  EXPECT_LT(prev, 0.05);
}

TEST_F(ModelTest, OutputTimesMustStartAtOrigin) {
  EXPECT_THROW(model.predict(windows[0], {1.0, 2.0}), ContractError);
}

TEST(Baseline, ZeroWeightRnnOutputsBias) {
  const auto cfg = small_config(ModelKind::Rnn);
  RecurrentBaseline m(cfg.model, 2);
  auto ps = m.parameters();
  zero_all(ps);
  for (auto* p : ps)
    if (p->name.ends_with("bias") && p->shape.back() == 1) p->value[0] = 0.25;
  auto state = m.zero_state(1);
  for (int k = 0; k < 4; ++k) {
    auto [s, y] = m.step(state, Tensor::constant({1, 5}, {1, 2, 3, 4, 1}), Binder{});
    for (double v : s.h.values()) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(y.item(), 0.25);
    state = s;
  }
}

TEST(Baseline, SaturatedForgetGateKeepsCell) {
  const auto cfg = small_config(ModelKind::Lstm);
  RecurrentBaseline m(cfg.model, 2);
  auto ps = m.parameters();
  zero_all(ps);
  const std::size_t h = cfg.model.baseline_hidden;
  for (auto* p : ps)
    if (p->shape == ad::Shape{1, 4 * h}) {
      for (std::size_t j = 0; j < h; ++j) p->value[j] = -1e3;          // input gate shut
      for (std::size_t j = h; j < 2 * h; ++j) p->value[j] = 1e3;       // forget gate open
    }
  nn::LSTMState s{Tensor::zeros({1, h}), Tensor::constant({1, h}, std::vector<double>(h, 0.37))};
  for (int k = 0; k < 5; ++k) {
    s = m.step(s, Tensor::constant({1, 5}, {1, -2, 3, 0.5, 1}), Binder{}).first;
    for (double c : s.c.values()) EXPECT_EQ(c, 0.37);
  }
}

TEST(Baseline, PredictLengths) {
  for (auto kind : {ModelKind::Rnn, ModelKind::Lstm}) {
    const auto cfg = small_config(kind);
    const auto data = prepared(cfg);
    const auto windows = make_windows(data, Phase::ExtrapolationTest, cfg);
    RecurrentBaseline m(cfg.model, 5);
    const auto& w = windows[0];
    EXPECT_EQ(m.predict(w, {}, 0).y.size(), 100u);
    EXPECT_EQ(m.predict(w, future_climate(w, 150), 150).y.size(), 250u);
    std::mt19937_64 rng(1);
    const Window d = apply_drop(w, 0.7, rng);
    EXPECT_EQ(m.predict(d, {}, 0).y.size(), 30u);
    EXPECT_THROW(m.predict(w, future_climate(w, 10), 150), ContractError);
  }
}

TEST(Baseline, TeacherForcedMatchesStepwisePredictOnKeptPoints) {
  const auto cfg = small_config(ModelKind::Lstm);
  const auto data = prepared(cfg);
  const auto windows = make_windows(data, Phase::ExtrapolationTest, cfg);
  RecurrentBaseline m(cfg.model, 5);
  const Tensor tf = m.teacher_forced({&windows[0]}, Binder{});
  const auto p = m.predict(windows[0], {}, 0);
  ASSERT_EQ(tf.size(), p.y.size());
  for (std::size_t i = 0; i < p.y.size(); ++i) EXPECT_NEAR(tf[i], p.y[i], 1e-12);
}

TEST(ModelConfigTest, InvalidDimsRejected) {
  ModelConfig c;
  c.latent_dim = 0;
  EXPECT_THROW(MrNodeModel(c, 0), ContractError);
  ModelConfig d;
  d.dynamics_hidden = {4, 0};
  EXPECT_THROW(MrNodeModel(d, 0), ContractError);
}
