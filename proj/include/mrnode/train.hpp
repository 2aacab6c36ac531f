// SPDX-License-Identifier: Apache-2.0
// Losses and the optimization loop for MR. NODE and the recurrent baselines.
#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "mrnode/checkpoint.hpp"
#include "mrnode/config.hpp"
#include "mrnode/diffgraph.hpp"
#include "mrnode/model.hpp"
#include "mrnode/windows.hpp"

namespace mrnode {

/// 0.5 * ln(2 pi): the per-point NLL of a perfect prediction with sigma = 1.
inline const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

/// Mean Gaussian negative log-likelihood with unit variance.
inline Tensor gaussian_nll(const Tensor& pred, const std::vector<double>& target) {
  if (pred.size() != target.size() || target.empty())
    throw ContractError("gaussian_nll: " + std::to_string(pred.size()) + " predictions vs " +
                        std::to_string(target.size()) + " targets");
  Tensor t = Tensor::constant(pred.shape(), target);
  return ad::add_scalar(ad::scale(ad::mean(ad::square(ad::sub(pred, t))), 0.5), kHalfLog2Pi);
}

inline double gaussian_nll(const std::vector<double>& pred, const std::vector<double>& target) {
  return gaussian_nll(Tensor::constant({pred.size(), 1}, pred), target).item();
}

inline double mse(const std::vector<double>& pred, const std::vector<double>& target) {
  if (pred.size() != target.size() || pred.empty()) throw ContractError("mse: length mismatch or empty");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - target[i]) * (pred[i] - target[i]);
  return s / static_cast<double>(pred.size());
}

/// Training datasets share one normalization, fitted on their pooled
/// training splits.
inline std::vector<std::shared_ptr<const PreparedDataset>> prepare_all(
    const std::vector<std::pair<std::string, DiseaseDataset>>& datasets, const DataStats& stats,
    const TrainConfig& cfg) {
  std::vector<std::shared_ptr<const PreparedDataset>> out;
  for (const auto& [tag, ds] : datasets)
    out.push_back(std::make_shared<const PreparedDataset>(prepare_dataset(tag, ds, stats, cfg.split_train, cfg.split_val)));
  return out;
}

/// Normalized-unit extrapolation MSE of a model on fully kept windows.
inline double extrapolation_mse(AnyModel& model, const std::vector<Window>& windows, const TrainConfig& cfg) {
  if (windows.empty()) return 0.0;
  double total = 0.0;
  if (auto* node = std::get_if<MrNodeModel>(&model)) {
    // Fully kept windows share a mask, so the whole set runs as one batch.
    std::vector<const Window*> ptrs;
    for (const auto& w : windows) ptrs.push_back(&w);
    const auto& times = windows.front().target_times;
    const Tensor y = node->forward(ptrs, times, Tensor::zeros({ptrs.size(), node->config().latent_dim}), Binder{},
                                   {cfg.substep, true});
    const std::size_t b = ptrs.size();
    for (std::size_t wi = 0; wi < b; ++wi) {
      double s = 0.0;
      const auto& w = windows[wi];
      for (std::size_t t = w.encode_length; t < times.size(); ++t) {
        const double d = y[t * b + wi] - w.target_y[t];
        s += d * d;
      }
      total += s / static_cast<double>(times.size() - w.encode_length);
    }
  } else {
    auto& base = std::get<RecurrentBaseline>(model);
    for (const auto& w : windows) {
      auto future = future_climate(w, w.horizon);
      auto p = base.predict(w, future, w.horizon);
      double s = 0.0;
      for (std::size_t h = 0; h < w.horizon; ++h) {
        const double d = p.y[p.y.size() - w.horizon + h] - w.target_y[w.encode_length + h];
        s += d * d;
      }
      total += s / static_cast<double>(w.horizon);
    }
  }
  return total / static_cast<double>(windows.size());
}

struct TrainResult {
  ModelCheckpoint checkpoint;            // weights of the best validation epoch
  std::vector<double> train_loss;        // index 0 = initial model, then one per epoch
  std::vector<double> validation_mse;    // normalized units, same indexing
};

namespace detail {

inline void clip_gradients(const std::vector<Parameter*>& params, double max_norm) {
  if (max_norm <= 0.0) return;
  const double norm = ad::grad_norm(params);
  if (norm <= max_norm) return;
  const double s = max_norm / norm;
  for (auto* p : params)
    for (auto& g : p->grad) g *= s;
}

/// Loss of one batch. With a tape it records the graph; without, it only
/// evaluates. `rng` supplies latent noise (MR. NODE) when sampling is on.
inline Tensor batch_loss(AnyModel& model, const std::vector<const Window*>& batch, const TrainConfig& cfg,
                         ad::Tape* tape, std::mt19937_64* noise_rng) {
  const Binder bind(tape);
  if (auto* node = std::get_if<MrNodeModel>(&model)) {
    const std::size_t b = batch.size(), l = node->config().latent_dim;
    std::vector<double> noise(b * l, 0.0);
    if (noise_rng) {
      std::normal_distribution<double> normal(0.0, 1.0);
      for (auto& x : noise) x = normal(*noise_rng);
    }
    const auto& times = batch.front()->target_times;
    auto res = node->run(batch, times, Tensor::constant({b, l}, std::move(noise)), bind, {cfg.substep, false});
    std::vector<double> target(times.size() * b);
    for (std::size_t t = 0; t < times.size(); ++t)
      for (std::size_t i = 0; i < b; ++i) target[t * b + i] = batch[i]->target_y[t];
    Tensor loss = gaussian_nll(res.y, target);
    if (cfg.kl_weight > 0.0) loss = ad::add(loss, ad::scale(kl_standard_normal(res.posterior), cfg.kl_weight));
    return loss;
  }
  auto& base = std::get<RecurrentBaseline>(model);
  // Windows with different drop masks run as separate groups on one tape.
  std::vector<ObservedSequence> seqs;
  for (const auto* w : batch) seqs.push_back(ObservedSequence::from(*w));
  std::vector<const ObservedSequence*> ptrs;
  for (const auto& s : seqs) ptrs.push_back(&s);
  std::vector<Tensor> preds;
  std::vector<double> target;
  for (const auto& group : group_by_times(ptrs)) {
    std::vector<const Window*> members;
    for (auto i : group) members.push_back(batch[i]);
    preds.push_back(base.teacher_forced(members, bind));
    const auto& times = seqs[group.front()].times;
    for (std::size_t k = 0; k < times.size(); ++k)
      for (auto i : group) target.push_back(seqs[i].obs[k][0]);
  }
  return gaussian_nll(preds.size() == 1 ? preds.front() : ad::concat(preds, 0), target);
}

}  // namespace detail

/// Trains on the training splits of every dataset, selects the epoch with the
/// lowest validation extrapolation MSE and returns its checkpoint. MR. NODE
/// trains on fully observed windows; baselines see drops at cfg.drop_rate.
inline TrainResult train_model(const std::vector<std::pair<std::string, DiseaseDataset>>& datasets,
                               const TrainConfig& cfg, std::ostream* log = nullptr) {
  cfg.validate();
  if (datasets.empty()) throw ContractError("train_model: no datasets");
  std::vector<const DiseaseDataset*> raw;
  std::vector<std::string> tags;
  for (const auto& [tag, ds] : datasets) {
    raw.push_back(&ds);
    tags.push_back(tag);
  }
  const DataStats stats = compute_data_stats(raw, cfg.split_train, cfg.split_val);
  const auto prepared = prepare_all(datasets, stats, cfg);

  std::vector<Window> train_windows, val_windows;
  for (const auto& ds : prepared) {
    for (auto& w : make_windows(ds, Phase::Train, cfg)) train_windows.push_back(std::move(w));
    for (auto& w : make_windows(ds, Phase::Validation, cfg)) val_windows.push_back(std::move(w));
  }
  for (std::size_t i = 0; i < train_windows.size(); ++i) train_windows[i].id = i;

  AnyModel model = make_model(cfg.model, cfg.seed);
  const auto params = parameters(model);
  ad::Adam adam({cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps});
  std::mt19937_64 rng(cfg.seed);
  const bool is_node = cfg.model.kind == ModelKind::MrNode;
  const bool sample = is_node && cfg.train_noise;

  auto windows_for_epoch = [&](std::size_t epoch) {
    std::vector<Window> ws;
    ws.reserve(train_windows.size());
    for (const auto& w : train_windows) {
      if (!is_node && cfg.drop_rate > 0.0) {
        auto drop_rng = window_rng(cfg.seed, epoch, w.id);
        ws.push_back(apply_drop(w, cfg.drop_rate, drop_rng));
      } else {
        ws.push_back(w);
      }
    }
    return ws;
  };

  TrainResult result;
  {
    auto ws = windows_for_epoch(0);
    double total = 0.0;
    for (std::size_t i = 0; i < ws.size(); i += cfg.batch_size) {
      std::vector<const Window*> batch;
      for (std::size_t j = i; j < std::min(ws.size(), i + cfg.batch_size); ++j) batch.push_back(&ws[j]);
      total += detail::batch_loss(model, batch, cfg, nullptr, nullptr).item() * static_cast<double>(batch.size());
    }
    result.train_loss.push_back(total / static_cast<double>(ws.size()));
    result.validation_mse.push_back(extrapolation_mse(model, val_windows, cfg));
  }
  double best = result.validation_mse.back();
  std::size_t best_epoch = 0;
  result.checkpoint = make_checkpoint(model, cfg, stats, 0, tags);
  if (log)
    *log << "epoch 0 loss " << result.train_loss.back() << " val_mse " << result.validation_mse.back() << "\n";

  std::vector<std::size_t> order(train_windows.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto ws = windows_for_epoch(epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t i = 0; i < order.size(); i += cfg.batch_size) {
      std::vector<const Window*> batch;
      for (std::size_t j = i; j < std::min(order.size(), i + cfg.batch_size); ++j) batch.push_back(&ws[order[j]]);
      ad::zero_grad(params);
      ad::Tape tape;
      Tensor loss = detail::batch_loss(model, batch, cfg, &tape, sample ? &rng : nullptr);
      const double value = loss.item();
      if (!std::isfinite(value))
        throw TrainingError("loss diverged (" + text::format_double(value) + ") at epoch " + std::to_string(epoch));
      tape.backward(loss);
      detail::clip_gradients(params, cfg.grad_clip);
      adam.step(params);
      total += value * static_cast<double>(batch.size());
    }
    result.train_loss.push_back(total / static_cast<double>(ws.size()));
    const double val = extrapolation_mse(model, val_windows, cfg);
    if (!std::isfinite(val)) throw TrainingError("validation MSE diverged at epoch " + std::to_string(epoch));
    result.validation_mse.push_back(val);
    if (val < best) {
      best = val;
      best_epoch = epoch;
      result.checkpoint = make_checkpoint(model, cfg, stats, epoch, tags);
    }
    if (log)
      *log << "epoch " << epoch << " loss " << result.train_loss.back() << " val_mse " << val
           << (best_epoch == epoch ? " *" : "") << "\n";
  }
  return result;
}

}  // namespace mrnode
