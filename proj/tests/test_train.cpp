// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "mrnode/checkpoint.hpp"
#include "mrnode/train.hpp"
#include "test_util.hpp"

using namespace mrnode;
using testutil::TempDir;

namespace {

/// Tiny setup that trains in well under a second per epoch.
TrainConfig tiny_config(ModelKind kind = ModelKind::MrNode) {
  TrainConfig c;
  c.model.kind = kind;
  c.model.latent_dim = 4;
  c.model.encoder_hidden = 6;
  c.model.dynamics_hidden = {8};
  c.model.decoder_hidden = {6};
  c.model.baseline_hidden = 6;
  c.train_encode = 24;
  c.eval_encode = 16;
  c.eval_horizon = 8;
  c.interp_length = 16;
  c.train_stride = 6;
  c.eval_stride = 8;
  c.split_train = 0.6;
  c.split_val = 0.2;
  c.batch_size = 4;
  c.lr = 0.01;
  c.epochs = 5;
  c.train_noise = false;
  c.substep = 1.0;
  return c;
}

/// Synthetic climate with a smooth sinusoidal risk in place of the disease model.
DiseaseDataset sinusoid_dataset(std::size_t n = 240) {
  auto climate = synth_climate(13, n);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = 10.0 + 5.0 * std::sin(2.0 * std::numbers::pi * static_cast<double>(i) / 24.0);
  return {std::move(climate), std::move(y)};
}

std::vector<std::pair<std::string, DiseaseDataset>> one(DiseaseDataset ds) {
  std::vector<std::pair<std::string, DiseaseDataset>> v;
  v.emplace_back("toy", std::move(ds));
  return v;
}

std::shared_ptr<const PreparedDataset> prepared(const TrainConfig& c, const DiseaseDataset& ds) {
  const auto stats = compute_data_stats({&ds}, c.split_train, c.split_val);
  return std::make_shared<const PreparedDataset>(prepare_dataset("toy", ds, stats, c.split_train, c.split_val));
}

}  // namespace

TEST(Config, ParsesKeyValuesAndComments) {
  TempDir dir;
  const auto path = dir.write("c.conf",
                              "# comment\nmodel = lstm\nlatent_dim = 7  # trailing\n"
                              "dynamics_hidden = 5,6\nlr=0.01\ntrain_noise = false\nseed = 9\n");
  const auto c = load_train_config(path);
  EXPECT_EQ(c.model.kind, ModelKind::Lstm);
  EXPECT_EQ(c.model.latent_dim, 7u);
  EXPECT_EQ(c.model.dynamics_hidden, (std::vector<std::size_t>{5, 6}));
  EXPECT_EQ(c.lr, 0.01);
  EXPECT_FALSE(c.train_noise);
  EXPECT_EQ(c.seed, 9u);
}

TEST(Config, RejectsBadInput) {
  TempDir dir;
  EXPECT_THROW(load_train_config(dir.write("a.conf", "bogus = 1\n")), ContractError);
  EXPECT_THROW(load_train_config(dir.write("b.conf", "lr = fast\n")), ContractError);
  EXPECT_THROW(load_train_config(dir.write("c.conf", "lr = 1\nlr = 2\n")), ParseError);
  EXPECT_THROW(load_train_config(dir.write("d.conf", "just words\n")), ParseError);
  EXPECT_THROW(load_train_config(dir.write("e.conf", "split_train = 0.9\nsplit_val = 0.2\n")), ContractError);
}

TEST(Config, StringRoundTrip) {
  auto c = tiny_config(ModelKind::Rnn);
  c.kl_weight = 0.125;
  TempDir dir;
  EXPECT_EQ(load_train_config(dir.write("r.conf", train_config_string(c))), c);
}

TEST(Config, ToyConfigLoads) {
  const auto c = load_train_config(std::string(MRNODE_SOURCE_DIR) + "/configs/toy.conf");
  EXPECT_EQ(c.model.kind, ModelKind::MrNode);
  EXPECT_EQ(c.eval_encode, 100u);
  EXPECT_EQ(c.eval_horizon, 150u);
}

TEST(Config, HorizonIs37AndAHalfDays) { EXPECT_EQ(horizon_days(TrainConfig{}.eval_horizon), 37.5); }

TEST(Splits, Chronological) {
  for (std::size_t n : {10u, 128u, 1000u, 1461u}) {
    const auto r = split_ranges(n, 0.8, 0.1);
    EXPECT_EQ(r[0].begin, 0u);
    EXPECT_EQ(r[0].end, r[1].begin);
    EXPECT_EQ(r[1].end, r[2].begin);
    EXPECT_EQ(r[2].end, n);
    if (r[1].size() > 0 && r[2].size() > 0) {
      EXPECT_LT(r[0].end - 1, r[1].begin);
      EXPECT_LT(r[1].begin, r[2].begin);
    }
  }
  const auto r = split_ranges(1000, 0.8, 0.1);
  EXPECT_EQ(r[0].size(), 800u);
  EXPECT_EQ(r[1].size(), 100u);
  EXPECT_EQ(r[2].size(), 100u);
}

TEST(Windows, ExactLengthGivesOneTrainingWindow) {
  TrainConfig c;
  c.split_train = 1.0;
  c.split_val = 0.0;
  for (std::size_t stride : {1u, 4u, 1000u}) {
    c.train_stride = stride;
    const auto ws = make_windows(prepared(c, sinusoid_dataset(128)), Phase::Train, c);
    ASSERT_EQ(ws.size(), 1u);
    EXPECT_EQ(ws[0].encode_length, 128u);
    EXPECT_EQ(ws[0].target_times.size(), 128u);
  }
}

TEST(Windows, PaperLengthsAndSplitContainment) {
  const TrainConfig c;
  const auto ds = generate_infection_series(synth_climate(1, 4000));
  const auto p = prepared(c, ds);
  for (auto phase : {Phase::Train, Phase::Validation, Phase::ExtrapolationTest, Phase::InterpolationTest}) {
    const auto ws = make_windows(p, phase, c);
    ASSERT_FALSE(ws.empty());
    for (const auto& w : ws) {
      const auto& r = p->range(w.split);
      EXPECT_GE(w.start, r.begin);
      EXPECT_LE(w.start + w.target_times.size(), r.end);
      EXPECT_EQ(w.kept_count(), w.encode_length);
    }
    const std::size_t span = ws[0].target_times.size();
    if (phase == Phase::Train) {
      EXPECT_EQ(span, 128u);
    }
    if (phase == Phase::Validation || phase == Phase::ExtrapolationTest) {
      EXPECT_EQ(ws[0].encode_length, 100u);
      EXPECT_EQ(span, 250u);
    }
    if (phase == Phase::InterpolationTest) {
      EXPECT_EQ(span, 100u);
    }
  }
}

TEST(Windows, TooShortDatasetRejected) {
  const TrainConfig c;
  EXPECT_THROW(make_windows(prepared(c, sinusoid_dataset(200)), Phase::ExtrapolationTest, c), ContractError);
}

TEST(Drop, CountsMatchRoundedRate) {
  TrainConfig c;
  c.split_train = 1.0;
  c.split_val = 0.0;
  c.train_encode = 100;
  const auto w = make_windows(prepared(c, sinusoid_dataset(100)), Phase::Train, c).front();
  const std::vector<std::pair<double, std::size_t>> cases = {{0.0, 100}, {0.3, 70}, {0.5, 50}, {0.7, 30}, {0.9, 10}};
  for (const auto& [p, kept] : cases) {
    std::mt19937_64 rng(3);
    const auto d = apply_drop(w, p, rng);
    EXPECT_EQ(d.kept_count(), kept) << "p=" << p;
    EXPECT_EQ(d.target_y, w.target_y);
    EXPECT_EQ(d.target_times, w.target_times);
    EXPECT_EQ(d.kept_times().size(), kept);
  }
  std::mt19937_64 rng(3);
  const auto unchanged = apply_drop(w, 0.0, rng);
  EXPECT_EQ(unchanged.mask, w.mask);
  EXPECT_EQ(unchanged.encode_obs, w.encode_obs);
}

TEST(Drop, TenPointsAtNinetyPercentKeepOne) {
  TrainConfig c;
  c.split_train = 1.0;
  c.split_val = 0.0;
  c.train_encode = 10;
  const auto w = make_windows(prepared(c, sinusoid_dataset(240)), Phase::Train, c).front();
  std::mt19937_64 rng(0);
  EXPECT_EQ(apply_drop(w, 0.9, rng).kept_count(), 1u);
  c.train_encode = 1;
  const auto w1 = make_windows(prepared(c, sinusoid_dataset(240)), Phase::Train, c).front();
  EXPECT_THROW(apply_drop(w1, 0.9, rng), ContractError);
  EXPECT_THROW(apply_drop(w, 1.0, rng), ContractError);
}

TEST(Drop, DeterministicPerWindowSeed) {
  TrainConfig c;
  c.split_train = 1.0;
  c.split_val = 0.0;
  c.train_encode = 100;
  const auto w = make_windows(prepared(c, sinusoid_dataset(100)), Phase::Train, c).front();
  auto r1 = window_rng(5, 1, 42), r2 = window_rng(5, 1, 42), r3 = window_rng(5, 1, 43);
  const auto a = apply_drop(w, 0.5, r1), b = apply_drop(w, 0.5, r2), d = apply_drop(w, 0.5, r3);
  EXPECT_EQ(a.mask, b.mask);
  EXPECT_NE(a.mask, d.mask);
}

TEST(Nll, Identities) {
  const std::vector<double> t = {1.0, -2.0, 0.5};
  EXPECT_NEAR(gaussian_nll(t, t), kHalfLog2Pi, 1e-15);
  EXPECT_NEAR(kHalfLog2Pi, 0.918938533204672741780329736406, 1e-15);
  EXPECT_NEAR(gaussian_nll(std::vector<double>{1.0}, std::vector<double>{0.0}), kHalfLog2Pi + 0.5, 1e-15);
  EXPECT_THROW(gaussian_nll(std::vector<double>{1.0, 2.0}, std::vector<double>{1.0}), ContractError);
  EXPECT_THROW(gaussian_nll(std::vector<double>{}, std::vector<double>{}), ContractError);
}

TEST(Nll, DifferenceIsHalfMse) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> p(17), q(17), t(17);
    for (std::size_t i = 0; i < 17; ++i) {
      p[i] = n(rng);
      q[i] = n(rng);
      t[i] = n(rng);
    }
    EXPECT_NEAR(gaussian_nll(p, t) - gaussian_nll(t, t), mse(p, t) / 2.0, 1e-12);
    EXPECT_NEAR(gaussian_nll(p, t) - gaussian_nll(q, t), (mse(p, t) - mse(q, t)) / 2.0, 1e-12);
  }
}

TEST(Training, ZeroEpochsReturnsInitialWeights) {
  auto c = tiny_config();
  c.epochs = 0;
  const auto r = train_model(one(sinusoid_dataset()), c);
  EXPECT_EQ(r.checkpoint.epoch, 0u);
  AnyModel init = make_model(c.model, c.seed);
  const auto ps = parameters(init);
  ASSERT_EQ(ps.size(), r.checkpoint.params.size());
  for (std::size_t i = 0; i < ps.size(); ++i) EXPECT_EQ(ps[i]->value, r.checkpoint.params[i].value);
  EXPECT_EQ(r.train_loss.size(), 1u);
}

TEST(Training, LossDropsOnSinusoid) {
  for (auto kind : {ModelKind::MrNode, ModelKind::Rnn, ModelKind::Lstm}) {
    const auto r = train_model(one(sinusoid_dataset()), tiny_config(kind));
    ASSERT_EQ(r.train_loss.size(), 6u);
    EXPECT_LT(r.train_loss[5], r.train_loss[0]) << to_string(kind);
  }
}

TEST(Training, SameSeedSameCheckpoint) {
  auto c = tiny_config();
  c.train_noise = true;
  c.kl_weight = 0.01;
  const auto a = train_model(one(sinusoid_dataset()), c);
  const auto b = train_model(one(sinusoid_dataset()), c);
  EXPECT_EQ(checkpoint_bytes(a.checkpoint), checkpoint_bytes(b.checkpoint));
  EXPECT_EQ(a.train_loss, b.train_loss);
  c.seed = 1;
  const auto d = train_model(one(sinusoid_dataset()), c);
  EXPECT_NE(checkpoint_bytes(a.checkpoint), checkpoint_bytes(d.checkpoint));
}

TEST(Training, BaselinesTrainWithDrops) {
  auto c = tiny_config(ModelKind::Lstm);
  c.drop_rate = 0.5;
  const auto a = train_model(one(sinusoid_dataset()), c);
  const auto b = train_model(one(sinusoid_dataset()), c);
  EXPECT_EQ(a.train_loss, b.train_loss);
  for (double l : a.train_loss) EXPECT_TRUE(std::isfinite(l));
}

TEST(Training, MultipleDatasetsShareNormalization) {
  std::vector<std::pair<std::string, DiseaseDataset>> ds;
  ds.emplace_back("a", sinusoid_dataset(240));
  ds.emplace_back("b", DiseaseDataset(synth_climate(2, 300), std::vector<double>(300, 3.0)));
  const auto r = train_model(ds, tiny_config());
  EXPECT_EQ(r.checkpoint.datasets, (std::vector<std::string>{"a", "b"}));
}

// Debug builds stop earlier, at the non-finite tensor assertion.
#ifdef NDEBUG
TEST(Training, DivergenceAborts) {
  auto c = tiny_config();
  c.lr = 1e200;
  c.epochs = 20;
  EXPECT_THROW(train_model(one(sinusoid_dataset()), c), TrainingError);
}
#endif

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    cfg = tiny_config();
    cfg.epochs = 2;
    result = train_model(one(sinusoid_dataset()), cfg);
  }
  TrainConfig cfg;
  TrainResult result;
};

TEST_F(CheckpointTest, SaveLoadSaveIsByteIdentical) {
  TempDir dir;
  save_checkpoint(dir.file("a.ckpt"), result.checkpoint);
  const auto back = load_checkpoint(dir.file("a.ckpt"));
  EXPECT_EQ(back, result.checkpoint);
  save_checkpoint(dir.file("b.ckpt"), back);
  EXPECT_EQ(text::read_file(dir.file("a.ckpt")), text::read_file(dir.file("b.ckpt")));
}

TEST_F(CheckpointTest, PredictionsSurviveRoundTrip) {
  const auto back = parse_checkpoint(checkpoint_bytes(result.checkpoint));
  AnyModel m1 = restore_model(result.checkpoint), m2 = restore_model(back);
  const auto p = prepared(cfg, sinusoid_dataset());
  for (const auto& w : make_windows(p, Phase::Validation, cfg)) {
    auto& a = std::get<MrNodeModel>(m1);
    auto& b = std::get<MrNodeModel>(m2);
    EXPECT_EQ(a.predict(w, w.target_times), b.predict(w, w.target_times));
  }
}

TEST_F(CheckpointTest, TruncatedFileIsCorrupt) {
  const auto bytes = checkpoint_bytes(result.checkpoint);
  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{12}, bytes.size() / 2, bytes.size() - 1}) {
    try {
      parse_checkpoint(std::string_view(bytes).substr(0, cut));
      FAIL() << "cut " << cut;
    } catch (const CheckpointError& e) {
      EXPECT_EQ(e.kind(), "checkpoint");
    }
  }
}

TEST_F(CheckpointTest, FlippedByteFailsChecksum) {
  auto bytes = checkpoint_bytes(result.checkpoint);
  bytes[bytes.size() / 2] ^= 0x10;
  EXPECT_THROW(parse_checkpoint(bytes), CheckpointError);
}

TEST_F(CheckpointTest, UnknownVersionRejected) {
  auto bytes = checkpoint_bytes(result.checkpoint);
  bytes[8] = 2;  // version field follows the 8-byte magic
  try {
    parse_checkpoint(bytes);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
  auto magic = checkpoint_bytes(result.checkpoint);
  magic[0] = 'X';
  EXPECT_THROW(parse_checkpoint(magic), CheckpointError);
}

TEST_F(CheckpointTest, RestoreRejectsMismatchedArchitecture) {
  auto ck = result.checkpoint;
  ck.config.model.latent_dim += 1;
  EXPECT_THROW(restore_model(ck), CheckpointError);
}
