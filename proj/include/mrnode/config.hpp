// SPDX-License-Identifier: Apache-2.0
// Model and training configuration plus the flat `key = value` config file.
#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mrnode/climate.hpp"
#include "mrnode/error.hpp"
#include "mrnode/text.hpp"

namespace mrnode {

enum class ModelKind { MrNode, Rnn, Lstm };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::MrNode: return "mrnode";
    case ModelKind::Rnn: return "rnn";
    case ModelKind::Lstm: return "lstm";
  }
  return "?";
}

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "mrnode") return ModelKind::MrNode;
  if (s == "rnn") return ModelKind::Rnn;
  if (s == "lstm") return ModelKind::Lstm;
  throw ContractError("unknown model kind '" + s + "' (expected mrnode, rnn or lstm)");
}

/// Architecture sizes. The encoder consumes input_dim observation channels
/// plus the time gap; the dynamics network sees latent_dim + predictor_dim.
struct ModelConfig {
  ModelKind kind = ModelKind::MrNode;
  std::size_t input_dim = 4;  // (Y, RH, T, CM)
  std::size_t predictor_dim = 3;
  std::size_t encoder_hidden = 64;
  std::size_t latent_dim = 32;
  std::vector<std::size_t> dynamics_hidden = {64, 64};
  std::vector<std::size_t> decoder_hidden = {32};
  std::size_t baseline_hidden = 64;

  void validate() const {
    if (input_dim != 4) throw ContractError("model: input_dim must be 4 (Y, RH, T, CM)");
    if (predictor_dim != 3) throw ContractError("model: predictor_dim must be 3 (RH, T, CM)");
    if (encoder_hidden == 0 || latent_dim == 0 || baseline_hidden == 0)
      throw ContractError("model: dimensions must be >= 1");
    for (auto w : dynamics_hidden)
      if (w == 0) throw ContractError("model: dynamics hidden widths must be >= 1");
    for (auto w : decoder_hidden)
      if (w == 0) throw ContractError("model: decoder hidden widths must be >= 1");
  }
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Horizon of the extrapolation protocol: 150 six-hour steps.
inline constexpr std::size_t kDefaultHorizonSteps = 150;
inline constexpr double horizon_days(std::size_t steps) { return static_cast<double>(steps) * kStepHours / 24.0; }
static_assert(horizon_days(kDefaultHorizonSteps) == 37.5);

struct TrainConfig {
  ModelConfig model{};

  // Window lengths in grid points.
  std::size_t train_encode = 128;  // reconstructed length equals encoded length
  std::size_t eval_encode = 100;
  std::size_t eval_horizon = kDefaultHorizonSteps;
  std::size_t interp_length = 100;
  std::size_t train_stride = 4;
  std::size_t eval_stride = 25;

  // Chronological splits; test receives the remainder.
  double split_train = 0.8;
  double split_val = 0.1;

  // Optimization.
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 0.0;  // global L2 norm, 0 = off
  double kl_weight = 0.0;
  bool train_noise = true;  // sample z0 during training
  double substep = 1.0;
  double drop_rate = 0.0;  // baselines only: drops applied while training
  std::uint64_t seed = 0;

  void validate() const {
    model.validate();
    if (train_encode == 0 || eval_encode == 0 || interp_length == 0)
      throw ContractError("config: window lengths must be positive");
    if (train_stride == 0 || eval_stride == 0) throw ContractError("config: strides must be positive");
    if (!(split_train > 0.0 && split_val >= 0.0 && split_train + split_val <= 1.0))
      throw ContractError("config: split fractions must satisfy 0 < train, 0 <= val, train + val <= 1");
    if (batch_size == 0) throw ContractError("config: batch_size must be >= 1");
    if (!(lr > 0.0)) throw ContractError("config: lr must be > 0");
    if (!(substep > 0.0)) throw ContractError("config: substep must be > 0");
    if (!(kl_weight >= 0.0) || !(grad_clip >= 0.0)) throw ContractError("config: kl_weight and grad_clip must be >= 0");
    if (!(drop_rate >= 0.0 && drop_rate < 1.0)) throw ContractError("config: drop_rate must be in [0,1)");
  }
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

namespace detail {

inline std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

inline std::vector<std::size_t> parse_sizes(const std::string& key, const std::string& s) {
  std::vector<std::size_t> out;
  if (s.empty()) return out;
  for (auto part : text::split(s, ',')) {
    auto v = text::parse_int(text::trim(part));
    if (!v || *v <= 0) throw ContractError("config: '" + key + "' expects positive integers, got '" + s + "'");
    out.push_back(static_cast<std::size_t>(*v));
  }
  return out;
}

}  // namespace detail

/// Every configurable field as canonical strings. Used by both the config file
/// writer and checkpoint metadata, so the mapping is the single source of
/// truth for key names.
inline std::map<std::string, std::string> to_key_values(const TrainConfig& c) {
  auto d = [](double v) { return text::format_double(v); };
  auto z = [](std::size_t v) { return std::to_string(v); };
  return {
      {"model", to_string(c.model.kind)},
      {"encoder_hidden", z(c.model.encoder_hidden)},
      {"latent_dim", z(c.model.latent_dim)},
      {"dynamics_hidden", detail::join_sizes(c.model.dynamics_hidden)},
      {"decoder_hidden", detail::join_sizes(c.model.decoder_hidden)},
      {"baseline_hidden", z(c.model.baseline_hidden)},
      {"train_encode", z(c.train_encode)},
      {"eval_encode", z(c.eval_encode)},
      {"eval_horizon", z(c.eval_horizon)},
      {"interp_length", z(c.interp_length)},
      {"train_stride", z(c.train_stride)},
      {"eval_stride", z(c.eval_stride)},
      {"split_train", d(c.split_train)},
      {"split_val", d(c.split_val)},
      {"epochs", z(c.epochs)},
      {"batch_size", z(c.batch_size)},
      {"lr", d(c.lr)},
      {"adam_beta1", d(c.adam_beta1)},
      {"adam_beta2", d(c.adam_beta2)},
      {"adam_eps", d(c.adam_eps)},
      {"grad_clip", d(c.grad_clip)},
      {"kl_weight", d(c.kl_weight)},
      {"train_noise", c.train_noise ? "true" : "false"},
      {"substep", d(c.substep)},
      {"drop_rate", d(c.drop_rate)},
      {"seed", std::to_string(c.seed)},
  };
}

/// Applies key/value overrides onto `base`. Unknown keys are rejected.
inline TrainConfig apply_key_values(TrainConfig base, const std::map<std::string, std::string>& kv) {
  for (const auto& [key, value] : kv) {
    auto num = [&]() {
      auto v = text::parse_double(value);
      if (!v) throw ContractError("config: '" + key + "' expects a number, got '" + value + "'");
      return *v;
    };
    auto count = [&]() {
      auto v = text::parse_int(value);
      if (!v || *v < 0) throw ContractError("config: '" + key + "' expects a non-negative integer, got '" + value + "'");
      return static_cast<std::size_t>(*v);
    };
    if (key == "model") base.model.kind = parse_model_kind(value);
    else if (key == "encoder_hidden") base.model.encoder_hidden = count();
    else if (key == "latent_dim") base.model.latent_dim = count();
    else if (key == "dynamics_hidden") base.model.dynamics_hidden = detail::parse_sizes(key, value);
    else if (key == "decoder_hidden") base.model.decoder_hidden = detail::parse_sizes(key, value);
    else if (key == "baseline_hidden") base.model.baseline_hidden = count();
    else if (key == "train_encode") base.train_encode = count();
    else if (key == "eval_encode") base.eval_encode = count();
    else if (key == "eval_horizon") base.eval_horizon = count();
    else if (key == "interp_length") base.interp_length = count();
    else if (key == "train_stride") base.train_stride = count();
    else if (key == "eval_stride") base.eval_stride = count();
    else if (key == "split_train") base.split_train = num();
    else if (key == "split_val") base.split_val = num();
    else if (key == "epochs") base.epochs = count();
    else if (key == "batch_size") base.batch_size = count();
    else if (key == "lr") base.lr = num();
    else if (key == "adam_beta1") base.adam_beta1 = num();
    else if (key == "adam_beta2") base.adam_beta2 = num();
    else if (key == "adam_eps") base.adam_eps = num();
    else if (key == "grad_clip") base.grad_clip = num();
    else if (key == "kl_weight") base.kl_weight = num();
    else if (key == "train_noise") {
      if (value != "true" && value != "false") throw ContractError("config: train_noise expects true or false");
      base.train_noise = value == "true";
    } else if (key == "substep") base.substep = num();
    else if (key == "drop_rate") base.drop_rate = num();
    else if (key == "seed") {
      auto v = text::parse_int(value);
      if (!v || *v < 0) throw ContractError("config: seed expects a non-negative integer");
      base.seed = static_cast<std::uint64_t>(*v);
    } else {
      throw ContractError("config: unknown key '" + key + "'");
    }
  }
  return base;
}

/// Parses `key = value` lines; '#' starts a comment. Duplicate keys are errors.
inline std::map<std::string, std::string> parse_key_values(const std::string& name, const std::string& content) {
  std::map<std::string, std::string> kv;
  std::size_t lineno = 0;
  for (auto line : text::split(content, '\n')) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = text::trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(name, lineno, std::string(line), "expected key = value");
    std::string key(text::trim(line.substr(0, eq)));
    std::string value(text::trim(line.substr(eq + 1)));
    if (key.empty()) throw ParseError(name, lineno, "", "empty key");
    if (!kv.emplace(key, value).second) throw ParseError(name, lineno, key, "duplicate key");
  }
  return kv;
}

inline TrainConfig load_train_config(const std::string& path, TrainConfig base = {}) {
  auto cfg = apply_key_values(std::move(base), parse_key_values(path, text::read_file(path)));
  cfg.validate();
  return cfg;
}

inline std::string train_config_string(const TrainConfig& c) {
  std::string out;
  for (const auto& [k, v] : to_key_values(c)) out += k + " = " + v + "\n";
  return out;
}

}  // namespace mrnode
