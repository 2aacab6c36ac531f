// SPDX-License-Identifier: Apache-2.0
// Independent reference implementations used only by the tests. They share no
// code with the library beyond plain data types.
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

struct Params {
  double t_min = 16.6, t_opt = 27.2, t_max = 30.3;
  double alpha = 32.6, gamma = 1.76, beta = 37.6;
};

/// Relative growth rate written out from the cardinal-temperature formula.
inline double rate(double temp, const Params& p) {
  if (temp <= p.t_min || temp >= p.t_max) return 0.0;
  const double e = (p.t_opt - p.t_min) / (p.t_max - p.t_opt);
  return (p.t_max - temp) / (p.t_max - p.t_opt) * std::pow((temp - p.t_min) / (p.t_opt - p.t_min), e);
}

/// Membership in a wet run of length >= 3, by scanning outwards from each point.
inline std::vector<bool> in_wet_period(const std::vector<bool>& wet) {
  const long n = static_cast<long>(wet.size());
  std::vector<bool> out(wet.size(), false);
  for (long i = 0; i < n; ++i) {
    if (!wet[i]) continue;
    long lo = i, hi = i;
    while (lo - 1 >= 0 && wet[lo - 1]) --lo;
    while (hi + 1 < n && wet[hi + 1]) ++hi;
    out[i] = hi - lo + 1 >= 3;
  }
  return out;
}

/// Start index of the wet run containing i (i must be wet).
inline std::size_t run_start(const std::vector<bool>& wet, std::size_t i) {
  while (i > 0 && wet[i - 1]) --i;
  return i;
}

/// Cumulative hazard at grid point i of the cohort launched at j, recomputed
/// from scratch as a sum of per-step increments.
inline double cohort_hazard(const std::vector<double>& temp, std::size_t j, std::size_t i, const Params& p) {
  double h = 0.0;
  for (std::size_t k = j + 1; k <= i; ++k) {
    const double a = 6.0 * static_cast<double>(k - j), b = 6.0 * static_cast<double>(k - j - 1);
    h += rate(temp[k], p) * (std::pow(a / p.alpha, p.gamma) - std::pow(b / p.alpha, p.gamma));
  }
  return h;
}

/// Brute-force infection series: for each wet point, every earlier cohort of
/// the same wet run contributes beta * (F(H(i)) - F(H(i-1))), F = 1 - e^-H.
inline std::vector<double> infection_series(const std::vector<double>& rh, const std::vector<double>& temp,
                                            const std::vector<double>& cm, const Params& p = {}) {
  const std::size_t n = rh.size();
  std::vector<bool> wet(n);
  for (std::size_t i = 0; i < n; ++i) wet[i] = cm[i] > 0.0 || rh[i] > 98.0;
  const auto member = in_wet_period(wet);
  std::vector<double> y(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!member[i]) continue;
    double s = 0.0;
    for (std::size_t j = run_start(wet, i); j < i; ++j) {
      const double now = cohort_hazard(temp, j, i, p);
      const double before = cohort_hazard(temp, j, i - 1, p);
      s += (1.0 - std::exp(-now)) - (1.0 - std::exp(-before));
    }
    y[i] = p.beta * s;
  }
  return y;
}

}  // namespace oracle
