// SPDX-License-Identifier: Apache-2.0
// Microclimate predictor series: CSV ingestion, statistics, normalization,
// a seeded synthetic generator and the continuous lookup w(t).
#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "mrnode/error.hpp"
#include "mrnode/text.hpp"

namespace mrnode {

using Timestamp = text::Timestamp;

/// Grid spacing of every series in the library.
inline constexpr std::chrono::hours kStep{6};
inline constexpr double kStepHours = 6.0;

inline constexpr const char* kClimateHeader = "timestamp,rh_percent,t_celsius,cm_meters";

/// Uniform 6-hourly (RH, T, CM) series for one coordinate. Immutable once
/// built; the constructor enforces every invariant.
class ClimateSeries {
 public:
  ClimateSeries(std::string coordinate_id, Timestamp start, std::vector<double> rh,
                std::vector<double> t, std::vector<double> cm)
      : coordinate_id_(std::move(coordinate_id)),
        start_(start),
        rh_(std::move(rh)),
        t_(std::move(t)),
        cm_(std::move(cm)) {
    if (rh_.empty()) throw ContractError("climate series must have at least one point");
    if (rh_.size() != t_.size() || rh_.size() != cm_.size())
      throw ContractError("climate series columns differ in length");
    for (std::size_t i = 0; i < rh_.size(); ++i) {
      if (!(rh_[i] >= 0.0 && rh_[i] <= 100.0))
        throw DomainError("rh out of [0,100] at index " + std::to_string(i));
      if (!(cm_[i] >= 0.0) || !std::isfinite(cm_[i]))
        throw DomainError("cm negative at index " + std::to_string(i));
      if (!std::isfinite(t_[i])) throw DomainError("t not finite at index " + std::to_string(i));
    }
  }

  const std::string& coordinate_id() const noexcept { return coordinate_id_; }
  Timestamp start_time() const noexcept { return start_; }
  Timestamp time_at(std::size_t i) const noexcept {
    return start_ + kStep * static_cast<long>(i);
  }
  std::size_t size() const noexcept { return rh_.size(); }
  const std::vector<double>& rh() const noexcept { return rh_; }
  const std::vector<double>& t() const noexcept { return t_; }
  const std::vector<double>& cm() const noexcept { return cm_; }

  /// Sub-series [first, first + count).
  ClimateSeries slice(std::size_t first, std::size_t count) const {
    if (count == 0 || first + count > size()) throw ContractError("climate slice out of range");
    auto sub = [&](const std::vector<double>& v) {
      return std::vector<double>(v.begin() + static_cast<long>(first),
                                 v.begin() + static_cast<long>(first + count));
    };
    return {coordinate_id_, time_at(first), sub(rh_), sub(t_), sub(cm_)};
  }

  friend bool operator==(const ClimateSeries&, const ClimateSeries&) = default;

 private:
  std::string coordinate_id_;
  Timestamp start_;
  std::vector<double> rh_, t_, cm_;
};

namespace detail {

struct ClimateRows {
  Timestamp start{};
  std::vector<double> rh, t, cm;
  std::vector<std::vector<double>> extra;  // one vector per extra column
};

/// Parses the shared climate column prefix plus any expected trailing columns.
inline ClimateRows parse_climate_table(const std::string& file, const std::string& content,
                                       const std::vector<std::string>& extra_columns) {
  std::vector<std::string> expected = {"timestamp", "rh_percent", "t_celsius", "cm_meters"};
  expected.insert(expected.end(), extra_columns.begin(), extra_columns.end());

  ClimateRows rows;
  rows.extra.resize(extra_columns.size());
  std::string_view rest(content);
  bool header_seen = false;
  std::size_t row = 0;
  Timestamp prev{};
  while (!rest.empty()) {
    auto nl = rest.find('\n');
    std::string_view line = rest.substr(0, nl);
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    auto cells = text::split(line, ',');
    if (!header_seen) {
      for (std::size_t c = 0; c < expected.size(); ++c) {
        if (c >= cells.size() || text::trim(cells[c]) != expected[c])
          throw ParseError(file, 0, expected[c], "missing column (expected header '" +
                                                     std::string(kClimateHeader) + "...')");
      }
      if (cells.size() != expected.size())
        throw ParseError(file, 0, std::string(text::trim(cells[expected.size()])), "unexpected column");
      header_seen = true;
      continue;
    }
    ++row;
    if (cells.size() != expected.size())
      throw ParseError(file, row, cells.size() < expected.size() ? expected[cells.size()] : "<extra>",
                       "expected " + std::to_string(expected.size()) + " fields, got " +
                           std::to_string(cells.size()));
    auto ts = text::parse_iso8601(text::trim(cells[0]));
    if (!ts) throw ParseError(file, row, "timestamp", "not an ISO-8601 UTC timestamp");
    if (row == 1) {
      rows.start = *ts;
    } else {
      if (*ts <= prev) throw ParseError(file, row, "timestamp", "timestamps not strictly increasing");
      if (*ts - prev != kStep)
        throw ParseError(file, row, "timestamp",
                         "gap of " + std::to_string((*ts - prev).count() / 3600) +
                             "h between consecutive rows (expected 6h)");
    }
    prev = *ts;
    auto num = [&](std::size_t c) {
      auto v = text::parse_double(text::trim(cells[c]));
      if (!v || !std::isfinite(*v)) throw ParseError(file, row, expected[c], "not a finite number");
      return *v;
    };
    const double rh = num(1), t = num(2), cm = num(3);
    if (rh < 0.0 || rh > 100.0) throw ParseError(file, row, "rh_percent", "out of range [0,100]");
    if (cm < 0.0) throw ParseError(file, row, "cm_meters", "negative canopy moisture");
    rows.rh.push_back(rh);
    rows.t.push_back(t);
    rows.cm.push_back(cm);
    for (std::size_t e = 0; e < extra_columns.size(); ++e) rows.extra[e].push_back(num(4 + e));
  }
  if (!header_seen) throw ParseError(file, 0, "timestamp", "empty file");
  if (row == 0) throw ParseError(file, 0, "timestamp", "no data rows");
  return rows;
}

inline void append_climate_row(std::string& out, const ClimateSeries& s, std::size_t i) {
  out += text::format_iso8601(s.time_at(i));
  out += ',';
  out += text::format_double(s.rh()[i]);
  out += ',';
  out += text::format_double(s.t()[i]);
  out += ',';
  out += text::format_double(s.cm()[i]);
}

}  // namespace detail

/// Reads a climate CSV. The coordinate id is the file stem.
inline ClimateSeries load_climate_csv(const std::string& path) {
  auto rows = detail::parse_climate_table(path, text::read_file(path), {});
  return {std::filesystem::path(path).stem().string(), rows.start, std::move(rows.rh),
          std::move(rows.t), std::move(rows.cm)};
}

inline std::string climate_csv_string(const ClimateSeries& s) {
  std::string out = kClimateHeader;
  out += '\n';
  for (std::size_t i = 0; i < s.size(); ++i) {
    detail::append_climate_row(out, s, i);
    out += '\n';
  }
  return out;
}

inline void save_climate_csv(const std::string& path, const ClimateSeries& s) {
  text::write_file_atomic(path, climate_csv_string(s));
}

// ---------------------------------------------------------------------------
// Statistics and normalization

struct VariableStats {
  double mean = 0.0;
  double std = 1.0;
  friend bool operator==(const VariableStats&, const VariableStats&) = default;
};

struct NormalizationStats {
  VariableStats rh, t, cm;
  friend bool operator==(const NormalizationStats&, const NormalizationStats&) = default;
};

/// Half-open index interval [begin, end).
struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const noexcept { return end > begin ? end - begin : 0; }
};

/// Mean and sample standard deviation (denominator N-1) over the pooled values.
/// Throws DegenerateStatsError when fewer than two values or zero variance.
inline VariableStats sample_stats(const std::vector<const std::vector<double>*>& columns,
                                  const std::vector<IndexRange>& ranges, const std::string& name) {
  std::size_t n = 0;
  double sum = 0.0;
  for (std::size_t c = 0; c < columns.size(); ++c)
    for (std::size_t i = ranges[c].begin; i < ranges[c].end; ++i) {
      sum += (*columns[c])[i];
      ++n;
    }
  if (n < 2) throw DegenerateStatsError(name + ": need at least two values for a sample std");
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t c = 0; c < columns.size(); ++c)
    for (std::size_t i = ranges[c].begin; i < ranges[c].end; ++i) {
      const double d = (*columns[c])[i] - mean;
      ss += d * d;
    }
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 0.0)) throw DegenerateStatsError(name + ": zero variance over the requested range");
  return {mean, sd};
}

/// Per-variable statistics pooled over several (series, range) pairs.
inline NormalizationStats compute_stats(const std::vector<const ClimateSeries*>& series,
                                        const std::vector<IndexRange>& ranges) {
  if (series.size() != ranges.size() || series.empty())
    throw ContractError("compute_stats: need one range per series");
  std::vector<const std::vector<double>*> rh, t, cm;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& r = ranges[k];
    if (r.size() == 0 || r.end > series[k]->size())
      throw ContractError("compute_stats: range empty or out of bounds");
    rh.push_back(&series[k]->rh());
    t.push_back(&series[k]->t());
    cm.push_back(&series[k]->cm());
  }
  return {sample_stats(rh, ranges, "rh"), sample_stats(t, ranges, "t"), sample_stats(cm, ranges, "cm")};
}

inline NormalizationStats compute_stats(const ClimateSeries& series, IndexRange range) {
  return compute_stats(std::vector<const ClimateSeries*>{&series}, std::vector<IndexRange>{range});
}

inline double normalize_value(double x, const VariableStats& s) { return (x - s.mean) / s.std; }
inline double denormalize_value(double z, const VariableStats& s) { return z * s.std + s.mean; }

/// Z-scored predictors on the same grid as the source series.
struct NormalizedClimate {
  std::vector<double> rh, t, cm;
  std::size_t size() const noexcept { return rh.size(); }
};

inline NormalizedClimate normalize(const ClimateSeries& s, const NormalizationStats& st) {
  NormalizedClimate out;
  out.rh.reserve(s.size());
  out.t.reserve(s.size());
  out.cm.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    out.rh.push_back(normalize_value(s.rh()[i], st.rh));
    out.t.push_back(normalize_value(s.t()[i], st.t));
    out.cm.push_back(normalize_value(s.cm()[i], st.cm));
  }
  return out;
}

/// Inverse of normalize(); the result carries the original series' identity.
inline ClimateSeries denormalize(const NormalizedClimate& z, const NormalizationStats& st,
                                 std::string coordinate_id, Timestamp start) {
  std::vector<double> rh, t, cm;
  for (std::size_t i = 0; i < z.size(); ++i) {
    rh.push_back(denormalize_value(z.rh[i], st.rh));
    t.push_back(denormalize_value(z.t[i], st.t));
    cm.push_back(denormalize_value(z.cm[i], st.cm));
  }
  return {std::move(coordinate_id), start, std::move(rh), std::move(t), std::move(cm)};
}

// ---------------------------------------------------------------------------
// Continuous predictor lookup w(t)

using Predictors = std::array<double, 3>;  // (rh, t, cm), normalized

/// Piecewise-linear interpolant over a normalized series, time in grid steps.
class PredictorInterpolant {
 public:
  explicit PredictorInterpolant(std::shared_ptr<const NormalizedClimate> grid) : grid_(std::move(grid)) {
    if (!grid_ || grid_->size() == 0) throw ContractError("interpolant needs a non-empty grid");
  }

  std::size_t size() const noexcept { return grid_->size(); }
  double last_time() const noexcept { return static_cast<double>(grid_->size() - 1); }
  const NormalizedClimate& grid() const noexcept { return *grid_; }

  /// Strict lookup; t must lie in [0, N-1].
  Predictors operator()(double t) const {
    if (!(t >= 0.0 && t <= last_time()))
      throw DomainError("predictor lookup at t=" + text::format_double(t) + " outside [0, " +
                        text::format_double(last_time()) + "]");
    return at(t);
  }

  /// Extrapolation-mode lookup: t is clamped into [0, N-1].
  Predictors clamped(double t) const {
    if (std::isnan(t)) throw DomainError("predictor lookup at NaN time");
    return at(std::clamp(t, 0.0, last_time()));
  }

 private:
  Predictors at(double t) const {
    const auto& g = *grid_;
    const auto k = static_cast<std::size_t>(std::floor(t));
    if (k + 1 >= g.size()) return {g.rh[g.size() - 1], g.t[g.size() - 1], g.cm[g.size() - 1]};
    const double lam = t - static_cast<double>(k);
    if (lam == 0.0) return {g.rh[k], g.t[k], g.cm[k]};
    auto lerp = [&](const std::vector<double>& v) { return (1.0 - lam) * v[k] + lam * v[k + 1]; };
    return {lerp(g.rh), lerp(g.t), lerp(g.cm)};
  }

  std::shared_ptr<const NormalizedClimate> grid_;
};

// ---------------------------------------------------------------------------
// Synthetic climate

/// Parameters of the synthetic generator. Each variable is an annual sinusoid
/// plus a diurnal sinusoid plus AR(1) noise scaled by noise_amplitude. Canopy
/// moisture is a rectified latent wetness signal whose noise is more
/// persistent than the others, so wet spells last several days in the rainy
/// season.
struct SynthProfile {
  double t_mean = 25.0, t_annual_amp = 1.0, t_diurnal_amp = 1.5, t_noise_sd = 0.5;
  double rh_mean = 86.0, rh_annual_amp = 2.0, rh_diurnal_amp = 8.0, rh_noise_sd = 3.0;
  double wet_bias = -0.3, wet_annual_amp = 0.1, wet_diurnal_amp = 0.15, wet_noise_sd = 0.6;
  double cm_scale = 5e-4;  // meters of storage per unit of latent wetness
  double noise_amplitude = 1.0;
  double noise_persistence = 0.7;  // AR(1) coefficient per 6h step
  double wet_persistence = 0.93;
  std::string coordinate_id = "synthetic";
  Timestamp start = std::chrono::sys_days{std::chrono::year{2019} / 1 / 1};
};

inline ClimateSeries synth_climate(std::uint64_t seed, std::size_t n, const SynthProfile& p = {}) {
  if (n == 0) throw ContractError("synth_climate: n must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double phi = p.noise_persistence;
  const double innov = std::sqrt(std::max(0.0, 1.0 - phi * phi));
  const double wet_innov = std::sqrt(std::max(0.0, 1.0 - p.wet_persistence * p.wet_persistence));
  double nt = 0.0, nrh = 0.0, nw = 0.0;
  constexpr double steps_per_year = 365.0 * 4.0;
  constexpr double two_pi = 2.0 * std::numbers::pi;

  std::vector<double> rh(n), t(n), cm(n);
  for (std::size_t i = 0; i < n; ++i) {
    nt = phi * nt + innov * normal(rng);
    nrh = phi * nrh + innov * normal(rng);
    nw = p.wet_persistence * nw + wet_innov * normal(rng);
    const double annual = std::sin(two_pi * static_cast<double>(i) / steps_per_year);
    // Phase puts the warmest grid point at index 2 of each day.
    const double diurnal = std::cos(two_pi * (static_cast<double>(i % 4) - 2.0) / 4.0);
    t[i] = p.t_mean + p.t_annual_amp * annual + p.t_diurnal_amp * diurnal +
           p.noise_amplitude * p.t_noise_sd * nt;
    rh[i] = std::clamp(p.rh_mean + p.rh_annual_amp * annual - p.rh_diurnal_amp * diurnal +
                           p.noise_amplitude * p.rh_noise_sd * nrh,
                       0.0, 100.0);
    const double wet = p.wet_bias + p.wet_annual_amp * annual - p.wet_diurnal_amp * diurnal +
                       p.noise_amplitude * p.wet_noise_sd * nw;
    cm[i] = wet > 0.0 ? p.cm_scale * wet : 0.0;
  }
  return {p.coordinate_id, p.start, std::move(rh), std::move(t), std::move(cm)};
}

}  // namespace mrnode
