// SPDX-License-Identifier: Apache-2.0
// Normalized datasets, chronological splits, data windows and drop masks.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "mrnode/climate.hpp"
#include "mrnode/config.hpp"
#include "mrnode/sigatoka.hpp"

namespace mrnode {

/// Normalization of all four channels, fitted on training data only.
struct DataStats {
  NormalizationStats climate;
  VariableStats y;
  friend bool operator==(const DataStats&, const DataStats&) = default;
};

enum class Split { Train = 0, Validation = 1, Test = 2 };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "?";
}

/// Chronological [train | validation | test] ranges over n points.
inline std::array<IndexRange, 3> split_ranges(std::size_t n, double train_frac, double val_frac) {
  const auto a = static_cast<std::size_t>(std::floor(train_frac * static_cast<double>(n)));
  const auto b = std::min(n, static_cast<std::size_t>(std::floor((train_frac + val_frac) * static_cast<double>(n))));
  return {IndexRange{0, a}, IndexRange{a, b}, IndexRange{b, n}};
}

inline DataStats compute_data_stats(const std::vector<const DiseaseDataset*>& datasets, double train_frac,
                                    double val_frac) {
  std::vector<const ClimateSeries*> series;
  std::vector<IndexRange> ranges;
  std::vector<const std::vector<double>*> ys;
  for (const auto* ds : datasets) {
    series.push_back(&ds->climate);
    ranges.push_back(split_ranges(ds->size(), train_frac, val_frac)[0]);
    ys.push_back(&ds->y);
  }
  return {compute_stats(series, ranges), sample_stats(ys, ranges, "y")};
}

/// A dataset with its normalized channels and predictor lookup.
struct PreparedDataset {
  std::string tag;
  std::shared_ptr<const DiseaseDataset> raw;
  DataStats stats;
  std::vector<double> y_norm;
  PredictorInterpolant predictors;
  std::array<IndexRange, 3> splits;

  std::size_t size() const noexcept { return y_norm.size(); }
  const IndexRange& range(Split s) const { return splits[static_cast<std::size_t>(s)]; }
};

inline PreparedDataset prepare_dataset(std::string tag, DiseaseDataset ds, const DataStats& stats,
                                       double train_frac, double val_frac) {
  auto raw = std::make_shared<const DiseaseDataset>(std::move(ds));
  auto grid = std::make_shared<const NormalizedClimate>(normalize(raw->climate, stats.climate));
  std::vector<double> y(raw->size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = normalize_value(raw->y[i], stats.y);
  auto splits = split_ranges(raw->size(), train_frac, val_frac);
  return {std::move(tag), std::move(raw), stats, std::move(y), PredictorInterpolant(std::move(grid)), splits};
}

using Observation = std::array<double, 4>;  // normalized (Y, RH, T, CM)

/// A contiguous slice used for training or scoring. Times are grid offsets
/// from `start`. The encoder sees the first `encode_length` grid points where
/// mask is true; targets cover encode_length + horizon points.
struct Window {
  std::size_t id = 0;  // ordinal within its make_windows() call
  std::size_t start = 0;
  Split split = Split::Train;
  std::shared_ptr<const PreparedDataset> data;
  std::size_t encode_length = 0;
  std::size_t horizon = 0;
  std::vector<Observation> encode_obs;  // all encode grid points, dropped ones included
  std::vector<bool> mask;               // true = kept
  std::vector<double> target_times;     // 0 .. encode_length + horizon - 1
  std::vector<double> target_y;         // normalized Y aligned with target_times

  std::size_t kept_count() const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
  }
  std::vector<double> kept_times() const {
    std::vector<double> t;
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (mask[i]) t.push_back(static_cast<double>(i));
    return t;
  }
  std::vector<Observation> kept_observations() const {
    std::vector<Observation> o;
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (mask[i]) o.push_back(encode_obs[i]);
    return o;
  }
  /// Normalized predictors at window-relative time t (clamped past the data end).
  Predictors predictors_at(double t, bool clamp) const {
    const double abs_t = static_cast<double>(start) + t;
    return clamp ? data->predictors.clamped(abs_t) : data->predictors(abs_t);
  }
};

enum class Phase { Train, Validation, ExtrapolationTest, InterpolationTest };

struct PhaseLengths {
  Split split;
  std::size_t encode;
  std::size_t horizon;
  std::size_t stride;
};

inline PhaseLengths phase_lengths(Phase phase, const TrainConfig& cfg) {
  switch (phase) {
    case Phase::Train: return {Split::Train, cfg.train_encode, 0, cfg.train_stride};
    case Phase::Validation: return {Split::Validation, cfg.eval_encode, cfg.eval_horizon, cfg.eval_stride};
    case Phase::ExtrapolationTest: return {Split::Test, cfg.eval_encode, cfg.eval_horizon, cfg.eval_stride};
    case Phase::InterpolationTest: return {Split::Test, cfg.interp_length, 0, cfg.eval_stride};
  }
  throw ContractError("unknown phase");
}

/// Sliding windows inside the phase's split, fully kept.
inline std::vector<Window> make_windows(const std::shared_ptr<const PreparedDataset>& ds, Phase phase,
                                        const TrainConfig& cfg) {
  const auto pl = phase_lengths(phase, cfg);
  const IndexRange r = ds->range(pl.split);
  const std::size_t span = pl.encode + pl.horizon;
  if (r.size() < span)
    throw ContractError("dataset '" + ds->tag + "' too short: " + to_string(pl.split) + " split has " +
                        std::to_string(r.size()) + " points, windows need " + std::to_string(span));
  const auto& g = ds->predictors.grid();
  std::vector<Window> out;
  for (std::size_t s = r.begin; s + span <= r.end; s += pl.stride) {
    Window w;
    w.id = out.size();
    w.start = s;
    w.split = pl.split;
    w.data = ds;
    w.encode_length = pl.encode;
    w.horizon = pl.horizon;
    w.mask.assign(pl.encode, true);
    for (std::size_t i = 0; i < pl.encode; ++i)
      w.encode_obs.push_back({ds->y_norm[s + i], g.rh[s + i], g.t[s + i], g.cm[s + i]});
    for (std::size_t i = 0; i < span; ++i) {
      w.target_times.push_back(static_cast<double>(i));
      w.target_y.push_back(ds->y_norm[s + i]);
    }
    out.push_back(std::move(w));
  }
  return out;
}

/// Number of encoder points removed at drop rate p.
inline std::size_t drop_count(std::size_t n, double p) {
  return static_cast<std::size_t>(std::llround(p * static_cast<double>(n)));
}

/// Masks exactly round(p * n) encoder points, chosen uniformly without
/// replacement. Targets are untouched.
template <class Rng>
Window apply_drop(Window w, double p, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ContractError("apply_drop: rate must be in [0,1)");
  const std::size_t n = w.encode_length;
  const std::size_t k = drop_count(n, p);
  if (k >= n) throw ContractError("apply_drop: rate " + text::format_double(p) + " would drop every point");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // Partial Fisher-Yates: the first k entries become the dropped set.
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  w.mask.assign(n, true);
  for (std::size_t i = 0; i < k; ++i) w.mask[idx[i]] = false;
  return w;
}

/// Deterministic generator for the drops of one window.
inline std::mt19937_64 window_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t window_id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(window_id),
                    static_cast<std::uint32_t>(window_id >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace mrnode
