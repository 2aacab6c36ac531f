// SPDX-License-Identifier: Apache-2.0
// Fixed-step explicit integrators over differentiable dynamics.
#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mrnode/diffgraph.hpp"
#include "mrnode/text.hpp"

namespace mrnode::ode {

using ad::Tensor;

/// dz/dt as a function of (z, t). t is in grid-step units.
using Dynamics = std::function<Tensor(const Tensor& z, double t)>;

struct OdeProblem {
  Dynamics dynamics;
  Tensor z0;
  std::vector<double> output_times;  // strictly increasing; the first is the origin of z0
};

namespace detail {

inline void validate(const OdeProblem& p, double h) {
  if (!(h > 0.0)) throw ContractError("integrator: substep h must be > 0");
  if (p.output_times.empty()) throw ContractError("integrator: no output times");
  if (!p.z0.defined()) throw ContractError("integrator: z0 undefined");
  for (std::size_t i = 1; i < p.output_times.size(); ++i)
    if (!(p.output_times[i] > p.output_times[i - 1]))
      throw ContractError("integrator: output times must be strictly increasing (index " + std::to_string(i) +
                          ")");
}

/// Number of equal substeps covering `gap` with step at most h.
inline std::size_t substeps(double gap, double h) {
  const double n = std::ceil(gap / h - 1e-9);
  return n < 1.0 ? 1 : static_cast<std::size_t>(n);
}

inline Tensor eval(const OdeProblem& p, const Tensor& z, double t) {
  Tensor dz = p.dynamics(z, t);
  if (dz.shape() != z.shape())
    throw ShapeError("dynamics returned " + ad::shape_str(dz.shape()) + " for state " + ad::shape_str(z.shape()));
  return dz;
}

template <class Step>
std::vector<Tensor> integrate(const OdeProblem& p, double h, Step step) {
  validate(p, h);
  std::vector<Tensor> out;
  out.reserve(p.output_times.size());
  Tensor z = p.z0;
  out.push_back(z);
  for (std::size_t k = 1; k < p.output_times.size(); ++k) {
    const double t0 = p.output_times[k - 1];
    const double gap = p.output_times[k] - t0;
    const std::size_t n = substeps(gap, h);
    const double dt = gap / static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) z = step(z, t0 + static_cast<double>(j) * dt, dt);
    out.push_back(z);
  }
  return out;
}

}  // namespace detail

/// Forward Euler: z <- z + dt f(z, t). Returns z at every output time; the
/// first entry is z0 itself.
inline std::vector<Tensor> euler_integrate(const OdeProblem& p, double h) {
  return detail::integrate(p, h, [&p](const Tensor& z, double t, double dt) {
    return ad::add(z, ad::scale(detail::eval(p, z, t), dt));
  });
}

/// Classical fourth-order Runge-Kutta with the same stepping rule as Euler.
inline std::vector<Tensor> rk4_integrate(const OdeProblem& p, double h) {
  return detail::integrate(p, h, [&p](const Tensor& z, double t, double dt) {
    Tensor k1 = detail::eval(p, z, t);
    Tensor k2 = detail::eval(p, ad::add(z, ad::scale(k1, dt / 2.0)), t + dt / 2.0);
    Tensor k3 = detail::eval(p, ad::add(z, ad::scale(k2, dt / 2.0)), t + dt / 2.0);
    Tensor k4 = detail::eval(p, ad::add(z, ad::scale(k3, dt)), t + dt);
    Tensor incr = ad::add(ad::add(k1, ad::scale(k2, 2.0)), ad::add(ad::scale(k3, 2.0), k4));
    return ad::add(z, ad::scale(incr, dt / 6.0));
  });
}

}  // namespace mrnode::ode
