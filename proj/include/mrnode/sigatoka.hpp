// SPDX-License-Identifier: Apache-2.0
// Weibull survival model of black Sigatoka infection and the generator of the
// infection-risk series Y from a climate series.
#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "mrnode/climate.hpp"
#include "mrnode/error.hpp"

namespace mrnode {

struct CardinalTemperatures {
  double t_min = 16.6;
  double t_opt = 27.2;
  double t_max = 30.3;

  void validate() const {
    if (!(t_min < t_opt && t_opt < t_max))
      throw ContractError("cardinal temperatures must satisfy t_min < t_opt < t_max");
  }
  friend bool operator==(const CardinalTemperatures&, const CardinalTemperatures&) = default;
};

/// Defaults are the best-fit parameters used to generate the reference data.
struct SurvivalParams {
  CardinalTemperatures cardinals{};
  double alpha = 32.6;  // hours
  double gamma = 1.76;
  double beta = 37.6;

  void validate() const {
    cardinals.validate();
    if (!(alpha > 0.0 && gamma > 0.0 && beta > 0.0))
      throw ContractError("survival parameters alpha, gamma, beta must be positive");
  }
  friend bool operator==(const SurvivalParams&, const SurvivalParams&) = default;
};

/// Relative spore growth rate. Zero at and outside the cardinal extremes,
/// 1 at t_opt.
inline double relative_rate(double temp, const CardinalTemperatures& c) {
  if (!(temp > c.t_min && temp < c.t_max)) return 0.0;
  const double hot = (c.t_max - temp) / (c.t_max - c.t_opt);
  const double cold = (temp - c.t_min) / (c.t_opt - c.t_min);
  const double exponent = (c.t_opt - c.t_min) / (c.t_max - c.t_opt);
  return hot * std::pow(cold, exponent);
}

/// Cumulative Weibull hazard after `hours` of wetness at constant temperature.
inline double weibull_hazard(double hours, double temp, const SurvivalParams& p) {
  if (!(hours >= 0.0)) throw DomainError("weibull_hazard: negative time " + text::format_double(hours));
  if (hours == 0.0) return 0.0;
  return relative_rate(temp, p.cardinals) * std::pow(hours / p.alpha, p.gamma);
}

inline double infected_fraction(double hazard) {
  if (!(hazard >= 0.0)) throw DomainError("infected_fraction: negative hazard");
  return -std::expm1(-hazard);
}

inline double cohort_infections(double fraction, double beta) {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw DomainError("cohort_infections: fraction outside [0,1]");
  return beta * fraction;
}

inline constexpr double kWetRhThreshold = 98.0;

inline bool is_wet(double rh, double cm) noexcept { return cm > 0.0 || rh > kWetRhThreshold; }

/// Inclusive index interval of a maximal wet run.
struct WetPeriod {
  std::size_t first = 0;
  std::size_t last = 0;
  std::size_t length() const noexcept { return last - first + 1; }
  friend bool operator==(const WetPeriod&, const WetPeriod&) = default;
};

inline constexpr std::size_t kMinWetRun = 3;

/// Maximal runs of true values of length >= kMinWetRun, sorted and disjoint.
inline std::vector<WetPeriod> detect_wet_periods(const std::vector<bool>& wet) {
  std::vector<WetPeriod> out;
  std::size_t i = 0;
  while (i < wet.size()) {
    if (!wet[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < wet.size() && wet[j + 1]) ++j;
    if (j - i + 1 >= kMinWetRun) out.push_back({i, j});
    i = j + 1;
  }
  return out;
}

inline std::vector<bool> wetness_mask(const ClimateSeries& s) {
  std::vector<bool> wet(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) wet[i] = is_wet(s.rh()[i], s.cm()[i]);
  return wet;
}

inline std::vector<WetPeriod> detect_wet_periods(const ClimateSeries& s) {
  return detect_wet_periods(wetness_mask(s));
}

/// Climate joined with the generated infection-risk series.
struct DiseaseDataset {
  ClimateSeries climate;
  std::vector<double> y;

  DiseaseDataset(ClimateSeries c, std::vector<double> risk) : climate(std::move(c)), y(std::move(risk)) {
    if (y.size() != climate.size()) throw ContractError("dataset: y length differs from climate length");
    for (double v : y)
      if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("dataset: y must be finite and >= 0");
  }
  std::size_t size() const noexcept { return y.size(); }
  friend bool operator==(const DiseaseDataset&, const DiseaseDataset&) = default;
};

/// Generates Y. Every wet grid point launches a cohort. Between consecutive
/// grid points a cohort of age a (steps) gains hazard
///   r(T_i) * [((6a)/alpha)^gamma - ((6(a-1))/alpha)^gamma],
/// which reproduces the closed-form hazard under constant temperature. The
/// recorded value at i is beta times the sum of every active cohort's
/// increment of infected fraction over the step ending at i. Cohorts die with
/// their wet period; points outside wet periods get 0.
inline DiseaseDataset generate_infection_series(const ClimateSeries& s, const SurvivalParams& p = {}) {
  p.validate();
  std::vector<double> y(s.size(), 0.0);
  auto age_term = [&](std::size_t age_steps) {
    return std::pow(kStepHours * static_cast<double>(age_steps) / p.alpha, p.gamma);
  };
  std::vector<double> hazard;
  for (const auto& wp : detect_wet_periods(s)) {
    hazard.assign(wp.length(), 0.0);
    for (std::size_t i = wp.first; i <= wp.last; ++i) {
      const double rate = relative_rate(s.t()[i], p.cardinals);
      double increment = 0.0;
      // Cohort launched at wp.first + c; the one launched at i has age 0.
      for (std::size_t c = 0; wp.first + c < i; ++c) {
        const std::size_t age = i - (wp.first + c);
        const double before = hazard[c];
        hazard[c] += rate * (age_term(age) - age_term(age - 1));
        // F(after) - F(before) = e^{-before} - e^{-after}
        increment += std::exp(-before) * -std::expm1(-(hazard[c] - before));
      }
      y[i] = p.beta * increment;
    }
  }
  return {s, std::move(y)};
}

// ---------------------------------------------------------------------------
// Dataset CSV: the climate columns plus y_cohorts.

inline constexpr const char* kDatasetYColumn = "y_cohorts";

inline std::string dataset_csv_string(const DiseaseDataset& ds) {
  std::string out = kClimateHeader;
  out += ',';
  out += kDatasetYColumn;
  out += '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    detail::append_climate_row(out, ds.climate, i);
    out += ',';
    out += text::format_double(ds.y[i]);
    out += '\n';
  }
  return out;
}

inline void save_dataset_csv(const std::string& path, const DiseaseDataset& ds) {
  text::write_file_atomic(path, dataset_csv_string(ds));
}

inline DiseaseDataset parse_dataset_csv(const std::string& name, const std::string& content,
                                        const std::string& coordinate_id) {
  auto rows = detail::parse_climate_table(name, content, {kDatasetYColumn});
  for (std::size_t i = 0; i < rows.extra[0].size(); ++i)
    if (rows.extra[0][i] < 0.0) throw ParseError(name, i + 1, kDatasetYColumn, "negative infection risk");
  ClimateSeries climate(coordinate_id, rows.start, std::move(rows.rh), std::move(rows.t), std::move(rows.cm));
  return {std::move(climate), std::move(rows.extra[0])};
}

inline DiseaseDataset load_dataset_csv(const std::string& path) {
  return parse_dataset_csv(path, text::read_file(path), std::filesystem::path(path).stem().string());
}

}  // namespace mrnode
