// SPDX-License-Identifier: Apache-2.0
// Property suites behind the `selftest` command: finite-difference gradient
// checks, solver convergence orders and disease-model identities.
#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mrnode/diffgraph.hpp"
#include "mrnode/layers.hpp"
#include "mrnode/odeint.hpp"
#include "mrnode/sigatoka.hpp"

namespace mrnode::selftest {

using ad::Binder;
using ad::Parameter;
using ad::Tensor;

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

inline constexpr double kGradTolerance = 1e-4;

namespace detail {

inline Tensor random_input(ad::Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> v(ad::numel(shape));
  for (auto& x : v) x = n(rng);
  return Tensor::constant(std::move(shape), std::move(v));
}

/// Weighted sum of outputs so every output entry carries a distinct gradient.
inline Tensor probe(const Tensor& y, const Tensor& weights) { return ad::sum(ad::mul(y, weights)); }

struct GradCase {
  std::string name;
  std::function<double(std::uint64_t seed)> run;  // worst relative error for one seed
};

inline std::vector<GradCase> gradient_cases() {
  using namespace mrnode::nn;
  std::vector<GradCase> cases;
  cases.push_back({"linear", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     Linear l("l", 3, 4, rng);
                     for (auto& b : l.bias.value) b = std::normal_distribution<double>(0.0, 0.5)(rng);
                     Tensor x = random_input({2, 3}, rng), w = random_input({2, 4}, rng);
                     std::vector<Parameter*> ps;
                     l.collect(ps);
                     return ad::gradcheck(ps, [&](ad::Tape* t) { return probe(l(x, Binder(t)), w); }).max_rel_error;
                   }});
  cases.push_back({"mlp", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     MLP m("m", {3, 5, 4, 2}, rng);
                     Tensor x = random_input({3, 3}, rng), w = random_input({3, 2}, rng);
                     std::vector<Parameter*> ps;
                     m.collect(ps);
                     return ad::gradcheck(ps, [&](ad::Tape* t) { return probe(m(x, Binder(t)), w); }).max_rel_error;
                   }});
  cases.push_back({"rnn_cell", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     RNNCell c("r", 3, 4, rng);
                     Tensor x0 = random_input({2, 3}, rng), x1 = random_input({2, 3}, rng);
                     Tensor h = random_input({2, 4}, rng, 0.5), w = random_input({2, 4}, rng);
                     std::vector<Parameter*> ps;
                     c.collect(ps);
                     return ad::gradcheck(ps, [&](ad::Tape* t) {
                              const Binder b(t);
                              return probe(c(x1, c(x0, h, b), b), w);
                            }).max_rel_error;
                   }});
  cases.push_back({"lstm_cell", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     LSTMCell c("c", 3, 3, rng);
                     Tensor x0 = random_input({2, 3}, rng), x1 = random_input({2, 3}, rng);
                     LSTMState s{random_input({2, 3}, rng, 0.5), random_input({2, 3}, rng, 0.5)};
                     Tensor wh = random_input({2, 3}, rng), wc = random_input({2, 3}, rng);
                     std::vector<Parameter*> ps;
                     c.collect(ps);
                     return ad::gradcheck(ps, [&](ad::Tape* t) {
                              const Binder b(t);
                              auto out = c(x1, c(x0, s, b), b);
                              return ad::add(probe(out.h, wh), probe(out.c, wc));
                            }).max_rel_error;
                   }});
  cases.push_back({"elementwise_ops", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     Parameter a = glorot("a", 2, 3, rng), b = glorot("b", 2, 3, rng);
                     for (auto& v : b.value) v = 0.5 + std::abs(v);  // keep log() in its domain
                     Tensor w = random_input({2, 6}, rng);
                     std::vector<Parameter*> ps = {&a, &b};
                     return ad::gradcheck(ps, [&](ad::Tape* t) {
                              const Binder bind(t);
                              Tensor x = bind(a), y = bind(b);
                              Tensor u = ad::add(ad::mul(ad::sigmoid(x), ad::log(y)), ad::exp(ad::scale(x, 0.5)));
                              Tensor v = ad::sub(ad::square(ad::tanh(x)), ad::add_scalar(ad::neg(y), 0.3));
                              Tensor c = ad::concat({u, ad::clamp(v, -5.0, 5.0)}, 1);
                              return ad::add(probe(c, w), ad::mean(ad::slice(c, 1, 1, 4)));
                            }).max_rel_error;
                   }});
  cases.push_back({"euler_unrolled_8", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     MLP f("f", {3 + 2, 6, 3}, rng);
                     Parameter z0 = glorot("z0", 2, 3, rng);
                     Tensor w = random_input({2, 3}, rng);
                     std::vector<Parameter*> ps = {&z0};
                     f.collect(ps);
                     // Smooth time forcing in place of the climate lookup.
                     return ad::gradcheck(ps, [&](ad::Tape* t) {
                              const Binder b(t);
                              ode::OdeProblem p{[&](const Tensor& z, double tt) {
                                                  Tensor forcing = Tensor::constant(
                                                      {2, 2}, {std::sin(tt), std::cos(tt), std::sin(2 * tt), std::cos(2 * tt)});
                                                  return f(ad::concat({z, forcing}, 1), b);
                                                },
                                                b(z0), {0.0, 2.0}};
                              const auto states = ode::euler_integrate(p, 0.25);
                              return probe(states.back(), w);
                            }).max_rel_error;
                   }});
  return cases;
}

}  // namespace detail

/// Every layer type and an 8-step unrolled Euler solve against central
/// differences, over `seeds` random instances each.
inline std::vector<Check> gradient_suite(std::size_t seeds) {
  std::vector<Check> out;
  for (const auto& c : detail::gradient_cases()) {
    double worst = 0.0;
    std::uint64_t worst_seed = 0;
    for (std::uint64_t s = 0; s < seeds; ++s) {
      const double e = c.run(s);
      if (!(e <= worst) || s == 0) {
        worst = e;
        worst_seed = s;
      }
    }
    out.push_back({"gradient/" + c.name, worst <= kGradTolerance,
                   "max rel error " + text::format_double(worst) + " (seed " + std::to_string(worst_seed) + ", " +
                       std::to_string(seeds) + " seeds)"});
  }
  return out;
}

/// Global error at t = 1 of dz/dt = z, z(0) = 1.
inline double growth_error(bool rk4, double h) {
  ode::OdeProblem p{[](const Tensor& z, double) { return z; }, Tensor::constant({1, 1}, {1.0}), {0.0, 1.0}};
  const auto s = rk4 ? ode::rk4_integrate(p, h) : ode::euler_integrate(p, h);
  return std::abs(s.back().item() - std::exp(1.0));
}

inline std::vector<Check> solver_suite() {
  std::vector<Check> out;
  for (bool rk4 : {false, true}) {
    const double lo = rk4 ? 12.0 : 1.8, hi = rk4 ? 20.0 : 2.2;
    double worst_lo = 1e300, worst_hi = 0.0;
    std::string ratios;
    for (double h : {0.1, 0.05, 0.025}) {
      const double r = growth_error(rk4, h) / growth_error(rk4, h / 2.0);
      worst_lo = std::min(worst_lo, r);
      worst_hi = std::max(worst_hi, r);
      ratios += (ratios.empty() ? "" : ", ") + text::format_double(r);
    }
    out.push_back({std::string("solver/") + (rk4 ? "rk4" : "euler") + "_order", worst_lo >= lo && worst_hi <= hi,
                   "error ratios under step halving: " + ratios});
  }
  return out;
}

inline std::vector<Check> disease_suite() {
  std::vector<Check> out;
  const SurvivalParams p{};
  const auto& c = p.cardinals;
  auto near = [](double a, double b) { return std::abs(a - b) <= 1e-12; };
  out.push_back({"disease/rate_at_cardinals",
                 near(relative_rate(c.t_opt, c), 1.0) && near(relative_rate(c.t_min, c), 0.0) &&
                     near(relative_rate(c.t_max, c), 0.0),
                 "r(Topt)=" + text::format_double(relative_rate(c.t_opt, c)) +
                     " r(Tmin)=" + text::format_double(relative_rate(c.t_min, c)) +
                     " r(Tmax)=" + text::format_double(relative_rate(c.t_max, c))});
  bool hazard_ok = true;
  for (double t = 10.0; t <= 35.0; t += 0.5)
    hazard_ok = hazard_ok && near(weibull_hazard(p.alpha, t, p), relative_rate(t, c));
  out.push_back({"disease/hazard_at_alpha", hazard_ok, "H(alpha, T) = r(T) for T in [10, 35]"});
  out.push_back({"disease/fraction_at_zero", infected_fraction(0.0) == 0.0, "F(0) = 0"});
  // Sum of increments over one long wet spell at constant T telescopes to
  // beta * F of the cohort launched first; the whole series stays >= 0.
  const std::size_t m = 12;
  std::vector<double> rh(m, 99.0), temp(m, 26.0), cm(m, 0.0);
  const ClimateSeries s("selftest", text::Timestamp{}, rh, temp, cm);
  const auto ds = generate_infection_series(s, p);
  double first_cohort = 0.0;
  bool nonneg = true;
  for (std::size_t i = 0; i < m; ++i) nonneg = nonneg && ds.y[i] >= 0.0;
  for (std::size_t i = 1; i < m; ++i) {
    const double a = weibull_hazard(kStepHours * static_cast<double>(i), 26.0, p);
    const double b = weibull_hazard(kStepHours * static_cast<double>(i - 1), 26.0, p);
    first_cohort += p.beta * (infected_fraction(a) - infected_fraction(b));
  }
  out.push_back({"disease/series_nonnegative", nonneg, "y >= 0 on a 12-point wet spell"});
  out.push_back({"disease/cohort_bound", first_cohort <= p.beta && ds.y[1] <= p.beta,
                 "single-cohort total " + text::format_double(first_cohort) + " <= beta"});
  return out;
}

inline std::vector<Check> run_all(std::size_t gradient_seeds = 10) {
  std::vector<Check> all;
  for (auto& c : gradient_suite(gradient_seeds)) all.push_back(std::move(c));
  for (auto& c : solver_suite()) all.push_back(std::move(c));
  for (auto& c : disease_suite()) all.push_back(std::move(c));
  return all;
}

}  // namespace mrnode::selftest
