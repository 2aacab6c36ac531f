// SPDX-License-Identifier: Apache-2.0
// Dense layers and recurrent cells built on the autodiff engine. Parameters
// are stored by value inside each layer; params() hands out pointers that stay
// valid as long as the layer is not moved.
#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "mrnode/diffgraph.hpp"

namespace mrnode::nn {

using ad::Binder;
using ad::Parameter;
using ad::Tensor;

/// Glorot-uniform initialization for a [fan_in, fan_out] matrix.
inline Parameter glorot(std::string name, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> v(fan_in * fan_out);
  for (auto& x : v) x = dist(rng);
  return {std::move(name), {fan_in, fan_out}, std::move(v)};
}

inline Parameter filled(std::string name, ad::Shape shape, double value) {
  const auto n = ad::numel(shape);
  return {std::move(name), std::move(shape), std::vector<double>(n, value)};
}

enum class Activation { Tanh, Identity };

inline Tensor activate(const Tensor& x, Activation a) {
  return a == Activation::Tanh ? ad::tanh(x) : x;
}

/// y = x W + b, x: [batch, in].
struct Linear {
  Parameter weight, bias;

  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng)
      : weight(glorot(name + ".weight", in, out, rng)), bias(filled(name + ".bias", {1, out}, 0.0)) {}

  std::size_t in_features() const { return weight.shape[0]; }
  std::size_t out_features() const { return weight.shape[1]; }

  Tensor operator()(const Tensor& x, const Binder& bind) {
    return ad::add(ad::matmul(x, bind(weight)), bind(bias));
  }
  void collect(std::vector<Parameter*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

/// Feed-forward stack. Hidden layers use `hidden`; the last layer uses `output`.
struct MLP {
  std::vector<Linear> layers;
  Activation hidden = Activation::Tanh;
  Activation output = Activation::Identity;

  MLP() = default;
  MLP(const std::string& name, const std::vector<std::size_t>& widths, std::mt19937_64& rng,
      Activation hidden_act = Activation::Tanh, Activation output_act = Activation::Identity)
      : hidden(hidden_act), output(output_act) {
    if (widths.size() < 2) throw ContractError("MLP needs at least input and output widths");
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      if (widths[i] == 0 || widths[i + 1] == 0) throw ContractError("MLP widths must be >= 1");
      layers.emplace_back(name + "." + std::to_string(i), widths[i], widths[i + 1], rng);
    }
  }

  Tensor operator()(Tensor x, const Binder& bind) {
    for (std::size_t i = 0; i < layers.size(); ++i)
      x = activate(layers[i](x, bind), i + 1 == layers.size() ? output : hidden);
    return x;
  }
  void collect(std::vector<Parameter*>& out) {
    for (auto& l : layers) l.collect(out);
  }
};

/// Elman cell: h' = tanh(x Wx + h Wh + b).
struct RNNCell {
  Parameter wx, wh, b;

  RNNCell() = default;
  RNNCell(const std::string& name, std::size_t in, std::size_t hidden, std::mt19937_64& rng)
      : wx(glorot(name + ".wx", in, hidden, rng)),
        wh(glorot(name + ".wh", hidden, hidden, rng)),
        b(filled(name + ".b", {1, hidden}, 0.0)) {}

  std::size_t hidden_size() const { return wh.shape[0]; }

  Tensor operator()(const Tensor& x, const Tensor& h, const Binder& bind) {
    return ad::tanh(ad::add(ad::add(ad::matmul(x, bind(wx)), ad::matmul(h, bind(wh))), bind(b)));
  }
  void collect(std::vector<Parameter*>& out) {
    out.push_back(&wx);
    out.push_back(&wh);
    out.push_back(&b);
  }
};

struct LSTMState {
  Tensor h, c;
};

/// Standard LSTM cell, gate blocks ordered (input, forget, cell, output).
/// The forget-gate bias starts at 1.
struct LSTMCell {
  Parameter wx, wh, b;

  LSTMCell() = default;
  LSTMCell(const std::string& name, std::size_t in, std::size_t hidden, std::mt19937_64& rng)
      : wx(glorot(name + ".wx", in, 4 * hidden, rng)),
        wh(glorot(name + ".wh", hidden, 4 * hidden, rng)),
        b(filled(name + ".b", {1, 4 * hidden}, 0.0)) {
    for (std::size_t j = hidden; j < 2 * hidden; ++j) b.value[j] = 1.0;
  }

  std::size_t hidden_size() const { return wh.shape[0]; }

  LSTMState zero_state(std::size_t batch) const {
    return {Tensor::zeros({batch, hidden_size()}), Tensor::zeros({batch, hidden_size()})};
  }

  LSTMState operator()(const Tensor& x, const LSTMState& s, const Binder& bind) {
    const std::size_t hs = hidden_size();
    Tensor gates = ad::add(ad::add(ad::matmul(x, bind(wx)), ad::matmul(s.h, bind(wh))), bind(b));
    Tensor i = ad::sigmoid(ad::slice(gates, 1, 0, hs));
    Tensor f = ad::sigmoid(ad::slice(gates, 1, hs, 2 * hs));
    Tensor g = ad::tanh(ad::slice(gates, 1, 2 * hs, 3 * hs));
    Tensor o = ad::sigmoid(ad::slice(gates, 1, 3 * hs, 4 * hs));
    Tensor c = ad::add(ad::mul(f, s.c), ad::mul(i, g));
    Tensor h = ad::mul(o, ad::tanh(c));
    return {h, c};
  }
  void collect(std::vector<Parameter*>& out) {
    out.push_back(&wx);
    out.push_back(&wh);
    out.push_back(&b);
  }
};

}  // namespace mrnode::nn
