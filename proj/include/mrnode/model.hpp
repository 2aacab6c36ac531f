// SPDX-License-Identifier: Apache-2.0
// Latent ODE with external-predictor lookup and partial decoding, plus the
// tanh-RNN and LSTM baselines it is compared against.
#pragma once

#include <cmath>
#include <map>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mrnode/config.hpp"
#include "mrnode/diffgraph.hpp"
#include "mrnode/layers.hpp"
#include "mrnode/odeint.hpp"
#include "mrnode/windows.hpp"

namespace mrnode {

using ad::Binder;
using ad::Parameter;
using ad::Tensor;

inline constexpr double kLogSigmaMin = -20.0;
inline constexpr double kLogSigmaMax = 5.0;

struct LatentPosterior {
  Tensor mu;         // [batch, latent]
  Tensor log_sigma;  // clamped to [kLogSigmaMin, kLogSigmaMax]
  Tensor sigma;      // exp(log_sigma)
};

/// Encoder input sequence: kept observations with their times, chronological.
struct ObservedSequence {
  std::vector<double> times;
  std::vector<Observation> obs;

  static ObservedSequence from(const Window& w) { return {w.kept_times(), w.kept_observations()}; }
};

/// Step inputs [batch, 5] of the reverse-chronological encoder pass. Step s
/// consumes point K-1-s; its dt is the gap to the point consumed before it
/// (0 for the first). All sequences must share time stamps.
inline std::vector<Tensor> reverse_encoder_inputs(const std::vector<const ObservedSequence*>& batch) {
  const auto& times = batch.front()->times;
  const std::size_t k = times.size();
  std::vector<Tensor> steps;
  steps.reserve(k);
  for (std::size_t s = 0; s < k; ++s) {
    const std::size_t j = k - 1 - s;
    // Gap back to the previously consumed (later) point; 0 for the first.
    const double dt = s == 0 ? 0.0 : times[j + 1] - times[j];
    std::vector<double> rows;
    rows.reserve(batch.size() * 5);
    for (const auto* seq : batch) {
      const auto& o = seq->obs[j];
      rows.insert(rows.end(), {o[0], o[1], o[2], o[3], dt});
    }
    steps.push_back(Tensor::constant({batch.size(), 5}, std::move(rows)));
  }
  return steps;
}

/// Groups sequence indices by identical time stamps, preserving first-seen order.
inline std::vector<std::vector<std::size_t>> group_by_times(const std::vector<const ObservedSequence*>& seqs) {
  std::vector<std::vector<std::size_t>> groups;
  std::vector<const std::vector<double>*> keys;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    std::size_t g = 0;
    while (g < keys.size() && *keys[g] != seqs[i]->times) ++g;
    if (g == keys.size()) {
      keys.push_back(&seqs[i]->times);
      groups.emplace_back();
    }
    groups[g].push_back(i);
  }
  return groups;
}

struct ForwardOptions {
  double substep = 1.0;
  bool clamp_predictors = true;  // extrapolation mode: hold w(t) at the last grid value past the data
};

/// MR. NODE. An LSTM reads the kept observations backwards in time and
/// produces a Gaussian over z(t0); the latent state evolves under
/// dz/dt = f([z, w(t)]) with the climate lookup w; a small decoder maps each
/// latent state to the normalized infection risk only.
class MrNodeModel {
 public:
  MrNodeModel() = default;
  MrNodeModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(seed);
    encoder_ = nn::LSTMCell("encoder.lstm", cfg_.input_dim + 1, cfg_.encoder_hidden, rng);
    to_posterior_ = nn::Linear("encoder.posterior", cfg_.encoder_hidden, 2 * cfg_.latent_dim, rng);
    std::vector<std::size_t> dyn = {cfg_.latent_dim + cfg_.predictor_dim};
    dyn.insert(dyn.end(), cfg_.dynamics_hidden.begin(), cfg_.dynamics_hidden.end());
    dyn.push_back(cfg_.latent_dim);
    dynamics_ = nn::MLP("dynamics", dyn, rng);
    std::vector<std::size_t> dec = {cfg_.latent_dim};
    dec.insert(dec.end(), cfg_.decoder_hidden.begin(), cfg_.decoder_hidden.end());
    dec.push_back(1);
    decoder_ = nn::MLP("decoder", dec, rng);
  }

  const ModelConfig& config() const noexcept { return cfg_; }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    encoder_.collect(out);
    to_posterior_.collect(out);
    dynamics_.collect(out);
    decoder_.collect(out);
    return out;
  }

  /// Posterior over z(t0) for every sequence in the batch (rows in input order).
  LatentPosterior encode(const std::vector<const ObservedSequence*>& batch, const Binder& bind) {
    if (batch.empty()) throw ContractError("encode: empty batch");
    for (const auto* s : batch)
      if (s->times.empty()) throw ContractError("encode: window has no observed points");
    auto groups = group_by_times(batch);
    std::vector<Tensor> parts;
    std::vector<std::size_t> order;
    for (const auto& g : groups) {
      std::vector<const ObservedSequence*> members;
      for (auto i : g) members.push_back(batch[i]);
      auto state = encoder_.zero_state(members.size());
      for (const auto& x : reverse_encoder_inputs(members)) state = encoder_(x, state, bind);
      parts.push_back(state.h);
      order.insert(order.end(), g.begin(), g.end());
    }
    Tensor h = parts.size() == 1 ? parts.front() : ad::concat(parts, 0);
    if (parts.size() > 1) h = reorder_rows(h, order);
    Tensor out = to_posterior_(h, bind);
    const std::size_t l = cfg_.latent_dim;
    LatentPosterior post;
    post.mu = ad::slice(out, 1, 0, l);
    post.log_sigma = ad::clamp(ad::slice(out, 1, l, 2 * l), kLogSigmaMin, kLogSigmaMax);
    post.sigma = ad::exp(post.log_sigma);
    return post;
  }

  /// Reparameterized sample z0 = mu + sigma * noise.
  static Tensor sample_latent(const LatentPosterior& post, const Tensor& noise) {
    if (noise.shape() != post.mu.shape())
      throw ShapeError("sample_latent: noise shape " + ad::shape_str(noise.shape()) + " vs posterior " +
                       ad::shape_str(post.mu.shape()));
    return ad::add(post.mu, ad::mul(post.sigma, noise));
  }

  /// dz/dt for latent states z [batch, latent] given predictors w [batch, 3].
  Tensor dynamics(const Tensor& z, const Tensor& w, const Binder& bind) {
    return dynamics_(ad::concat({z, w}, 1), bind);
  }

  /// Normalized Y for latent states [rows, latent] -> [rows, 1].
  Tensor decode(const Tensor& z, const Binder& bind) { return decoder_(z, bind); }

  struct ForwardResult {
    Tensor y;  // [T * batch, 1], row t * batch + b is window b at output_times[t]
    LatentPosterior posterior;
  };

  /// Encode, sample, integrate with Euler, decode.
  Tensor forward(const std::vector<const Window*>& windows, const std::vector<double>& output_times,
                 const Tensor& noise, const Binder& bind, const ForwardOptions& opt = {}) {
    return run(windows, output_times, noise, bind, opt).y;
  }

  ForwardResult run(const std::vector<const Window*>& windows, const std::vector<double>& output_times,
                    const Tensor& noise, const Binder& bind, const ForwardOptions& opt = {}) {
    if (output_times.empty() || output_times.front() != 0.0)
      throw ContractError("forward: output times must start at the window origin 0");
    std::vector<ObservedSequence> seqs;
    seqs.reserve(windows.size());
    for (const auto* w : windows) seqs.push_back(ObservedSequence::from(*w));
    std::vector<const ObservedSequence*> ptrs;
    for (const auto& s : seqs) ptrs.push_back(&s);
    const auto post = encode(ptrs, bind);
    const Tensor z0 = sample_latent(post, noise);
    ode::OdeProblem problem{[&](const Tensor& z, double t) { return dynamics(z, lookup(windows, t, opt), bind); },
                            z0, output_times};
    const auto states = ode::euler_integrate(problem, opt.substep);
    return {decode(states.size() == 1 ? states.front() : ad::concat(states, 0), bind), post};
  }

  /// Inference for one window with zero noise; normalized Y per output time.
  std::vector<double> predict(const Window& w, const std::vector<double>& output_times,
                              const ForwardOptions& opt = {}) {
    Tensor out = forward({&w}, output_times, Tensor::zeros({1, cfg_.latent_dim}), Binder{}, opt);
    return {out.values().begin(), out.values().end()};
  }

  static Tensor lookup(const std::vector<const Window*>& windows, double t, const ForwardOptions& opt) {
    std::vector<double> rows;
    rows.reserve(windows.size() * 3);
    for (const auto* w : windows) {
      const auto p = w->predictors_at(t, opt.clamp_predictors);
      rows.insert(rows.end(), p.begin(), p.end());
    }
    return Tensor::constant({windows.size(), 3}, std::move(rows));
  }

 private:
  /// Rows of h are in `order`; put row order[r] back at position order[r].
  static Tensor reorder_rows(const Tensor& h, const std::vector<std::size_t>& order) {
    std::vector<Tensor> rows(order.size());
    for (std::size_t r = 0; r < order.size(); ++r) rows[order[r]] = ad::slice(h, 0, r, r + 1);
    return ad::concat(rows, 0);
  }

  ModelConfig cfg_{};
  nn::LSTMCell encoder_;
  nn::Linear to_posterior_;
  nn::MLP dynamics_;
  nn::MLP decoder_;
};

/// KL(N(mu, sigma) || N(0, I)), averaged over the batch.
inline Tensor kl_standard_normal(const LatentPosterior& post) {
  // 0.5 * sum(sigma^2 + mu^2 - 1 - 2 log sigma)
  Tensor terms = ad::add_scalar(
      ad::sub(ad::add(ad::square(post.sigma), ad::square(post.mu)), ad::scale(post.log_sigma, 2.0)), -1.0);
  return ad::scale(ad::sum(terms), 0.5 / static_cast<double>(post.mu.dim(0)));
}

// ---------------------------------------------------------------------------
// Baselines

/// Step input of the baselines: (previous Y, RH, T, CM, dt), where previous Y
/// is the last consumed observation (teacher forcing) or the model's own last
/// prediction (self-feeding over the horizon).
inline constexpr std::size_t kBaselineInputWidth = 5;

struct BaselinePrediction {
  std::vector<double> times;  // window-relative
  std::vector<double> y;      // normalized
};

class RecurrentBaseline {
 public:
  RecurrentBaseline() = default;
  RecurrentBaseline(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    if (cfg_.kind == ModelKind::MrNode) throw ContractError("baseline needs kind rnn or lstm");
    std::mt19937_64 rng(seed);
    if (cfg_.kind == ModelKind::Rnn)
      rnn_ = nn::RNNCell("baseline.rnn", kBaselineInputWidth, cfg_.baseline_hidden, rng);
    else
      lstm_ = nn::LSTMCell("baseline.lstm", kBaselineInputWidth, cfg_.baseline_hidden, rng);
    head_ = nn::Linear("baseline.head", cfg_.baseline_hidden, 1, rng);
  }

  const ModelConfig& config() const noexcept { return cfg_; }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    if (cfg_.kind == ModelKind::Rnn) rnn_.collect(out);
    else lstm_.collect(out);
    head_.collect(out);
    return out;
  }

  nn::LSTMState zero_state(std::size_t batch) const {
    return {Tensor::zeros({batch, cfg_.baseline_hidden}), Tensor::zeros({batch, cfg_.baseline_hidden})};
  }

  /// One cell step; returns the new state and Yhat [batch, 1].
  std::pair<nn::LSTMState, Tensor> step(const nn::LSTMState& state, const Tensor& input, const Binder& bind) {
    if (input.rank() != 2 || input.dim(1) != kBaselineInputWidth)
      throw ShapeError("baseline step: input must be [batch, 5], got " + ad::shape_str(input.shape()));
    nn::LSTMState next;
    if (cfg_.kind == ModelKind::Rnn) {
      next.h = rnn_(input, state.h, bind);
      next.c = state.c;
    } else {
      next = lstm_(input, state, bind);
    }
    return {next, head_(next.h, bind)};
  }

  /// Teacher-forced pass over the kept encode points of windows that share a
  /// mask. Returns [K * batch, 1], row k * batch + b.
  Tensor teacher_forced(const std::vector<const Window*>& windows, const Binder& bind) {
    const auto times = windows.front()->kept_times();
    for (const auto* w : windows)
      if (w->kept_times() != times) throw ContractError("teacher_forced: windows must share a mask");
    std::vector<std::vector<Observation>> obs;
    for (const auto* w : windows) obs.push_back(w->kept_observations());
    auto state = zero_state(windows.size());
    std::vector<Tensor> outs;
    for (std::size_t k = 0; k < times.size(); ++k) {
      const double dt = k == 0 ? 0.0 : times[k] - times[k - 1];
      std::vector<double> rows;
      for (const auto& o : obs) {
        const double prev_y = k == 0 ? 0.0 : o[k - 1][0];
        rows.insert(rows.end(), {prev_y, o[k][1], o[k][2], o[k][3], dt});
      }
      auto [s, y] = step(state, Tensor::constant({windows.size(), kBaselineInputWidth}, std::move(rows)), bind);
      state = s;
      outs.push_back(y);
    }
    return outs.size() == 1 ? outs.front() : ad::concat(outs, 0);
  }

  /// Reconstruction over the kept encode points, then `horizon` grid points
  /// after the encode window fed with future climate and the model's own
  /// previous prediction.
  BaselinePrediction predict(const Window& w, std::span<const Predictors> future_climate, std::size_t horizon) {
    if (future_climate.size() < horizon)
      throw ContractError("baseline_predict: future climate covers " + std::to_string(future_climate.size()) +
                          " of " + std::to_string(horizon) + " horizon steps");
    const Binder bind{};
    BaselinePrediction out;
    const auto times = w.kept_times();
    const auto obs = w.kept_observations();
    auto state = zero_state(1);
    double prev_y = 0.0, prev_t = times.empty() ? 0.0 : times.front();
    auto run = [&](double t, const Predictors& climate, double y_in) {
      const double dt = out.times.empty() ? 0.0 : t - prev_t;
      auto [s, y] = step(state, Tensor::constant({1, kBaselineInputWidth}, {y_in, climate[0], climate[1], climate[2], dt}), bind);
      state = s;
      prev_t = t;
      out.times.push_back(t);
      out.y.push_back(y.item());
      return y.item();
    };
    for (std::size_t k = 0; k < times.size(); ++k) {
      run(times[k], {obs[k][1], obs[k][2], obs[k][3]}, prev_y);
      prev_y = obs[k][0];
    }
    double fed = out.y.empty() ? 0.0 : out.y.back();
    for (std::size_t h = 0; h < horizon; ++h)
      fed = run(static_cast<double>(w.encode_length + h), future_climate[h], fed);
    return out;
  }

 private:
  ModelConfig cfg_{};
  nn::RNNCell rnn_;
  nn::LSTMCell lstm_;
  nn::Linear head_;
};

/// Either model family, selected by ModelConfig::kind.
using AnyModel = std::variant<MrNodeModel, RecurrentBaseline>;

inline AnyModel make_model(const ModelConfig& cfg, std::uint64_t seed) {
  if (cfg.kind == ModelKind::MrNode) return MrNodeModel(cfg, seed);
  return RecurrentBaseline(cfg, seed);
}

inline std::vector<Parameter*> parameters(AnyModel& m) {
  return std::visit([](auto& model) { return model.parameters(); }, m);
}

/// Horizon climate for a window, read from the dataset past the encode span.
inline std::vector<Predictors> future_climate(const Window& w, std::size_t horizon) {
  std::vector<Predictors> out;
  const auto& grid = w.data->predictors.grid();
  for (std::size_t h = 0; h < horizon; ++h) {
    const std::size_t i = w.start + w.encode_length + h;
    if (i >= grid.size()) break;
    out.push_back({grid.rh[i], grid.t[i], grid.cm[i]});
  }
  return out;
}

}  // namespace mrnode
