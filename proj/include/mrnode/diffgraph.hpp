// SPDX-License-Identifier: Apache-2.0
// Reverse-mode automatic differentiation over dense f64 tensors.
//
// A Tape records every operation whose inputs require gradients. Tensors
// without a tape are constants; operations on constants only compute values,
// which is how inference runs. One tape belongs to one thread.
#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mrnode/error.hpp"

namespace mrnode::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(s[i]);
  }
  return out + "]";
}

/// Trainable tensor with a stable name used by checkpoints.
struct Parameter {
  std::string name;
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;

  Parameter() = default;
  Parameter(std::string n, Shape s, std::vector<double> v)
      : name(std::move(n)), shape(std::move(s)), value(std::move(v)), grad(value.size(), 0.0) {
    if (value.size() != numel(shape))
      throw ShapeError("parameter '" + name + "': value length does not match " + shape_str(shape));
  }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

class Tape;

class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> data) {
    if (data.size() != numel(shape))
      throw ShapeError("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                       shape_str(shape));
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::make_shared<const std::vector<double>>(std::move(data));
    t.check_finite();
    return t;
  }
  static Tensor scalar(double v) { return constant({1}, {v}); }
  static Tensor zeros(Shape shape) {
    auto n = numel(shape);
    return constant(std::move(shape), std::vector<double>(n, 0.0));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return data_ ? data_->size() : 0; }
  std::span<const double> values() const noexcept { return data_ ? std::span<const double>(*data_) : std::span<const double>{}; }
  double operator[](std::size_t i) const { return (*data_)[i]; }
  double item() const {
    if (size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape_));
    return (*data_)[0];
  }

  bool defined() const noexcept { return data_ != nullptr; }
  bool requires_grad() const noexcept { return tape_ != nullptr; }
  Tape* tape() const noexcept { return tape_; }
  int node() const noexcept { return node_; }
  std::uint64_t generation() const noexcept { return generation_; }

  /// Same values, detached from any graph.
  Tensor detach() const {
    Tensor t = *this;
    t.tape_ = nullptr;
    t.node_ = -1;
    return t;
  }

 private:
  friend class Tape;

  void check_finite() const {
#ifndef NDEBUG
    for (double v : *data_) assert(std::isfinite(v) && "non-finite tensor value");
#endif
  }

  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  Tape* tape_ = nullptr;
  int node_ = -1;
  std::uint64_t generation_ = 0;
};

/// Records operations for one backward pass. backward() consumes the graph:
/// all nodes are released and a new generation starts, so stale tensors from
/// the previous graph are rejected.
class Tape {
 public:
  using Backward = std::function<void(std::span<const double> grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf tensor tracking a parameter. Watching the same parameter twice in
  /// one graph returns the same node.
  Tensor watch(Parameter& p) {
    if (auto it = watched_.find(&p); it != watched_.end()) return it->second;
    Tensor t = Tensor::constant(p.shape, p.value);
    const int id = push(t.size(), nullptr);
    nodes_[static_cast<std::size_t>(id)].param = &p;
    bind(t, id);
    watched_.emplace(&p, t);
    return t;
  }

  /// Non-parameter leaf. Its gradient is reported through the input_grads
  /// argument of backward(); used for gradients w.r.t. inputs.
  Tensor input(Shape shape, std::vector<double> data) {
    Tensor t = Tensor::constant(std::move(shape), std::move(data));
    bind(t, push(t.size(), nullptr));
    return t;
  }

  /// Binds a freshly computed constant as the output of a recorded operation.
  Tensor record(Tensor value, Backward fn) {
    bind(value, push(value.size(), std::move(fn)));
    return value;
  }

  /// Accumulates into the gradient buffer of node id.
  void accumulate(int id, std::span<const double> g) {
    auto& buf = grad_buffer(id);
    for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
  }
  std::vector<double>& grad_buffer(int id) {
    auto& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty()) n.grad.assign(n.size, 0.0);
    return n.grad;
  }

  /// Propagates d(loss)/d(node) to every reachable parameter (p.grad +=).
  /// If input_grads is given, gradients of input() leaves are copied there in
  /// creation order.
  void backward(const Tensor& loss, std::vector<std::vector<double>>* input_grads = nullptr) {
    if (loss.tape() != this) throw ContractError("backward: loss was not produced by this tape");
    check(loss);
    if (loss.size() != 1) throw ContractError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    grad_buffer(loss.node())[0] += 1.0;
    for (int i = loss.node(); i >= 0; --i) {
      auto& n = nodes_[static_cast<std::size_t>(i)];
      if (n.grad.empty()) continue;
      if (n.backward) {
        n.backward(n.grad);
      } else if (n.param) {
        for (std::size_t k = 0; k < n.grad.size(); ++k) n.param->grad[k] += n.grad[k];
      }
    }
    if (input_grads) {
      input_grads->clear();
      for (auto& n : nodes_)
        if (!n.backward && !n.param) input_grads->push_back(n.grad.empty() ? std::vector<double>(n.size, 0.0) : n.grad);
    }
    clear();
  }

  /// Drops the graph without propagating.
  void clear() {
    nodes_.clear();
    nodes_.shrink_to_fit();
    watched_.clear();
    ++generation_;
  }

  std::size_t node_count() const noexcept { return nodes_.size(); }

  void check(const Tensor& t) const {
    if (t.tape() == this && t.generation() != generation_)
      throw ContractError("tensor belongs to a graph that was already consumed");
  }

 private:
  struct Node {
    std::size_t size = 0;
    std::vector<double> grad;
    Backward backward;
    Parameter* param = nullptr;
  };

  int push(std::size_t size, Backward fn) {
    Node n;
    n.size = size;
    n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size() - 1);
  }
  void bind(Tensor& t, int id) {
    t.tape_ = this;
    t.node_ = id;
    t.generation_ = generation_;
  }

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, Tensor> watched_;
  std::uint64_t generation_ = 1;
};

namespace detail {

inline Tape* common_tape(std::initializer_list<const Tensor*> ts) {
  Tape* tape = nullptr;
  for (const Tensor* t : ts) {
    if (!t->defined()) throw ContractError("operation on an undefined tensor");
    if (!t->tape()) continue;
    t->tape()->check(*t);
    if (tape && tape != t->tape()) throw ContractError("operands belong to different tapes");
    tape = t->tape();
  }
  return tape;
}

enum class Bcast { Same, RightScalar, LeftScalar, RightRow, LeftRow };

inline Bcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Bcast::Same;
  if (b.size() == 1) return Bcast::RightScalar;
  if (a.size() == 1) return Bcast::LeftScalar;
  if (a.rank() == 2 && b.rank() == 2 && b.dim(0) == 1 && b.dim(1) == a.dim(1)) return Bcast::RightRow;
  if (a.rank() == 2 && b.rank() == 2 && a.dim(0) == 1 && a.dim(1) == b.dim(1)) return Bcast::LeftRow;
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                   shape_str(b.shape()));
}

/// Elementwise binary op with the supported broadcasts. da/db give the local
/// partial derivatives at (x, y).
template <class F, class DA, class DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, F f, DA da, DB db) {
  Tape* tape = common_tape({&a, &b});
  const Bcast kind = broadcast_kind(a, b, name);
  const Shape out_shape = (kind == Bcast::LeftScalar || kind == Bcast::LeftRow) ? b.shape() : a.shape();
  const std::size_t n = numel(out_shape);
  const std::size_t cols = out_shape.empty() ? 1 : out_shape.back();
  auto ia = [kind, cols](std::size_t i) -> std::size_t {
    switch (kind) {
      case Bcast::LeftScalar: return 0;
      case Bcast::LeftRow: return i % cols;
      default: return i;
    }
  };
  auto ib = [kind, cols](std::size_t i) -> std::size_t {
    switch (kind) {
      case Bcast::RightScalar: return 0;
      case Bcast::RightRow: return i % cols;
      default: return i;
    }
  };
  auto av = a.values(), bv = b.values();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(av[ia(i)], bv[ib(i)]);
  Tensor result = Tensor::constant(out_shape, std::move(out));
  if (!tape) return result;
  return tape->record(std::move(result), [tape, a, b, ia, ib, n, da, db](std::span<const double> g) {
    auto av = a.values(), bv = b.values();
    if (a.requires_grad()) {
      std::vector<double> ga(a.size(), 0.0);
      for (std::size_t i = 0; i < n; ++i) ga[ia(i)] += g[i] * da(av[ia(i)], bv[ib(i)]);
      tape->accumulate(a.node(), ga);
    }
    if (b.requires_grad()) {
      std::vector<double> gb(b.size(), 0.0);
      for (std::size_t i = 0; i < n; ++i) gb[ib(i)] += g[i] * db(av[ia(i)], bv[ib(i)]);
      tape->accumulate(b.node(), gb);
    }
  });
}


/// Elementwise unary op; dy computes d(out)/d(in) from (input, output).
template <class F, class D>
Tensor unary(const Tensor& a, F f, D dy) {
  Tape* tape = common_tape({&a});
  auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  Tensor result = Tensor::constant(a.shape(), std::move(out));
  if (!tape) return result;
  return tape->record(result, [tape, a, result, dy](std::span<const double> g) {
    auto av = a.values(), rv = result.values();
    std::vector<double> ga(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) ga[i] = g[i] * dy(av[i], rv[i]);
    tape->accumulate(a.node(), ga);
  });
}

inline void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected a rank-2 tensor, got " + shape_str(t.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic. Broadcasting supports equal shapes, a single-element
// operand, and a [1,n] row against an [m,n] matrix.

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

inline Tensor scale(const Tensor& a, double s) {
  return detail::unary(
      a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

inline Tensor add_scalar(const Tensor& a, double s) {
  return detail::unary(
      a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

inline Tensor neg(const Tensor& a) { return scale(a, -1.0); }

inline Tensor tanh(const Tensor& a) {
  return detail::unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline Tensor sigmoid(const Tensor& a) {
  return detail::unary(
      a,
      [](double x) {
        // Split by sign so exp never overflows.
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

inline Tensor exp(const Tensor& a) {
  return detail::unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Tensor log(const Tensor& a) {
  return detail::unary(
      a,
      [](double x) {
        if (!(x > 0.0)) throw DomainError("log of non-positive value");
        return std::log(x);
      },
      [](double x, double) { return 1.0 / x; });
}

/// Clamps into [lo, hi]; the gradient is zero where clamping is active.
inline Tensor clamp(const Tensor& a, double lo, double hi) {
  return detail::unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

inline Tensor square(const Tensor& a) {
  return detail::unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

// ---------------------------------------------------------------------------
// Linear algebra and reductions

/// [m,k] x [k,n] -> [m,n]
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_rank2(a, "matmul");
  detail::require_rank2(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Tape* tape = detail::common_tape({&a, &b});
  auto av = a.values(), bv = b.values();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double x = av[i * k + p];
      const double* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += x * brow[j];
    }
  }
  Tensor result = Tensor::constant({m, n}, std::move(out));
  if (!tape) return result;
  return tape->record(result, [tape, a, b, m, k, n](std::span<const double> g) {
    auto av = a.values(), bv = b.values();
    if (a.requires_grad()) {
      // dA = G B^T
      std::vector<double> ga(m * k, 0.0);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          const double* grow = g.data() + i * n;
          const double* brow = bv.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ga[i * k + p] = acc;
        }
      tape->accumulate(a.node(), ga);
    }
    if (b.requires_grad()) {
      // dB = A^T G
      std::vector<double> gb(k * n, 0.0);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double x = av[i * k + p];
          double* gbrow = gb.data() + p * n;
          const double* grow = g.data() + i * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += x * grow[j];
        }
      tape->accumulate(b.node(), gb);
    }
  });
}

inline Tensor sum(const Tensor& a) {
  Tape* tape = detail::common_tape({&a});
  double s = 0.0;
  for (double v : a.values()) s += v;
  Tensor result = Tensor::scalar(s);
  if (!tape) return result;
  return tape->record(result, [tape, a](std::span<const double> g) {
    std::vector<double> ga(a.size(), g[0]);
    tape->accumulate(a.node(), ga);
  });
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

/// Concatenates rank-2 tensors along axis 0 (rows) or 1 (columns).
inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  if (axis > 1) throw ShapeError("concat: axis must be 0 or 1");
  Tape* tape = nullptr;
  for (const auto& p : parts) {
    detail::require_rank2(p, "concat");
    if (Tape* t = detail::common_tape({&p})) {
      if (tape && tape != t) throw ContractError("concat: operands belong to different tapes");
      tape = t;
    }
  }
  const std::size_t other = axis == 0 ? parts[0].dim(1) : parts[0].dim(0);
  std::size_t total = 0;
  for (const auto& p : parts) {
    if ((axis == 0 ? p.dim(1) : p.dim(0)) != other)
      throw ShapeError("concat: shapes " + shape_str(parts[0].shape()) + " and " + shape_str(p.shape()) +
                       " disagree off axis " + std::to_string(axis));
    total += p.dim(axis);
  }
  const Shape out_shape = axis == 0 ? Shape{total, other} : Shape{other, total};
  std::vector<double> out(numel(out_shape));
  std::size_t offset = 0;
  for (const auto& p : parts) {
    auto v = p.values();
    if (axis == 0) {
      std::copy(v.begin(), v.end(), out.begin() + static_cast<long>(offset * other));
    } else {
      const std::size_t w = p.dim(1);
      for (std::size_t r = 0; r < other; ++r)
        std::copy_n(v.begin() + static_cast<long>(r * w), w, out.begin() + static_cast<long>(r * total + offset));
    }
    offset += p.dim(axis);
  }
  Tensor result = Tensor::constant(out_shape, std::move(out));
  if (!tape) return result;
  return tape->record(result, [tape, parts, axis, other, total](std::span<const double> g) {
    std::size_t offset = 0;
    for (const auto& p : parts) {
      if (p.requires_grad()) {
        std::vector<double> gp(p.size());
        if (axis == 0) {
          std::copy_n(g.begin() + static_cast<long>(offset * other), gp.size(), gp.begin());
        } else {
          const std::size_t w = p.dim(1);
          for (std::size_t r = 0; r < other; ++r)
            std::copy_n(g.begin() + static_cast<long>(r * total + offset), w, gp.begin() + static_cast<long>(r * w));
        }
        tape->accumulate(p.node(), gp);
      }
      offset += p.dim(axis);
    }
  });
}

/// Rows or columns [begin, end) of a rank-2 tensor.
inline Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  detail::require_rank2(a, "slice");
  if (axis > 1) throw ShapeError("slice: axis must be 0 or 1");
  if (begin >= end || end > a.dim(axis))
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for " +
                     shape_str(a.shape()) + " on axis " + std::to_string(axis));
  Tape* tape = detail::common_tape({&a});
  const std::size_t rows = a.dim(0), cols = a.dim(1), len = end - begin;
  const Shape out_shape = axis == 0 ? Shape{len, cols} : Shape{rows, len};
  auto av = a.values();
  std::vector<double> out;
  out.reserve(numel(out_shape));
  if (axis == 0) {
    out.assign(av.begin() + static_cast<long>(begin * cols), av.begin() + static_cast<long>(end * cols));
  } else {
    for (std::size_t r = 0; r < rows; ++r)
      out.insert(out.end(), av.begin() + static_cast<long>(r * cols + begin), av.begin() + static_cast<long>(r * cols + end));
  }
  Tensor result = Tensor::constant(out_shape, std::move(out));
  if (!tape) return result;
  return tape->record(result, [tape, a, axis, begin, rows, cols, len](std::span<const double> g) {
    std::vector<double> ga(rows * cols, 0.0);
    if (axis == 0) {
      std::copy(g.begin(), g.end(), ga.begin() + static_cast<long>(begin * cols));
    } else {
      for (std::size_t r = 0; r < rows; ++r)
        std::copy_n(g.begin() + static_cast<long>(r * len), len, ga.begin() + static_cast<long>(r * cols + begin));
    }
    tape->accumulate(a.node(), ga);
  });
}

// ---------------------------------------------------------------------------
// Parameter binding and optimization

/// Resolves parameters to tensors: tracked leaves when a tape is present,
/// constants otherwise (inference).
class Binder {
 public:
  explicit Binder(Tape* tape = nullptr) : tape_(tape) {}
  Tensor operator()(Parameter& p) const {
    return tape_ ? tape_->watch(p) : Tensor::constant(p.shape, p.value);
  }
  Tensor operator()(const Parameter& p) const {
    if (tape_) throw ContractError("cannot track a const parameter");
    return Tensor::constant(p.shape, p.value);
  }
  Tape* tape() const noexcept { return tape_; }

 private:
  Tape* tape_;
};

inline void zero_grad(const std::vector<Parameter*>& params) {
  for (auto* p : params) p->zero_grad();
}

/// Global L2 norm of all gradients.
inline double grad_norm(const std::vector<Parameter*>& params) {
  double ss = 0.0;
  for (const auto* p : params)
    for (double g : p->grad) ss += g * g;
  return std::sqrt(ss);
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers are keyed by parameter order,
/// so the same parameter list must be passed to every step.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(const std::vector<Parameter*>& params) {
    if (m_.empty()) {
      for (const auto* p : params) {
        m_.emplace_back(p->value.size(), 0.0);
        v_.emplace_back(p->value.size(), 0.0);
      }
    }
    if (m_.size() != params.size()) throw ContractError("Adam: parameter list changed between steps");
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& p = *params[k];
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad[i];
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        p.value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

  std::uint64_t steps() const noexcept { return t_; }
  const AdamConfig& config() const noexcept { return cfg_; }

 private:
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// ---------------------------------------------------------------------------
// Finite-difference gradient check

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "param[index]"
  std::size_t checked = 0;
};

/// Compares tape gradients of loss_fn w.r.t. every parameter entry against
/// central differences with step h. Relative error is
/// |analytic - numeric| / max(|analytic|, |numeric|, floor).
inline GradCheckResult gradcheck(const std::vector<Parameter*>& params,
                                 const std::function<Tensor(Tape*)>& loss_fn, double h = 1e-5,
                                 double floor = 1e-6) {
  zero_grad(params);
  Tape tape;
  tape.backward(loss_fn(&tape));
  GradCheckResult res;
  for (auto* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double orig = p->value[i];
      p->value[i] = orig + h;
      const double fp = loss_fn(nullptr).item();
      p->value[i] = orig - h;
      const double fm = loss_fn(nullptr).item();
      p->value[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double analytic = p->grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++res.checked;
      if (rel > res.max_rel_error || res.worst.empty()) {
        if (rel >= res.max_rel_error) {
          res.max_rel_error = rel;
          res.worst = p->name + "[" + std::to_string(i) + "]";
        }
      }
    }
  }
  return res;
}

}  // namespace mrnode::ad
