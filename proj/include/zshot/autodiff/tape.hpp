#pragma once

// Vector-level reverse-mode tape.
//
// Nodes hold 1-D values; weight matrices never become nodes. Ops that touch
// parameters read them straight out of the flat parameter buffer and scatter
// their adjoints into a caller-provided gradient buffer of the same length.
// The scalar type T is double for gradients and Dual for Hessian-vector
// products.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "zshot/autodiff/dual.hpp"

namespace zshot::ad {

struct Var {
  std::uint32_t id = 0;
};

template <class T>
class Tape {
 public:
  using Scalar = T;

  /// `param_grad` may be empty for forward-only evaluation.
  Tape(std::span<const T> params, std::span<T> param_grad)
      : params_(params), param_grad_(param_grad) {
    if (!param_grad_.empty() && param_grad_.size() != params_.size()) {
      throw std::invalid_argument("gradient buffer does not match parameter count");
    }
  }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool records() const { return !param_grad_.empty(); }
  std::size_t num_nodes() const { return values_.size(); }
  std::span<const T> params() const { return params_; }

  const std::vector<T>& value(Var x) const { return values_[x.id]; }
  T scalar(Var x) const { return values_[x.id].front(); }
  std::size_t dim(Var x) const { return values_[x.id].size(); }

  // ---------------------------------------------------------------- leaves

  Var constant(std::vector<T> v) { return push(std::move(v), {}); }
  Var zeros(std::size_t n) { return constant(std::vector<T>(n, T(0.0))); }

  /// Parameter slice [offset, offset + n) as a node.
  Var param(std::size_t offset, std::size_t n) {
    check_param_range(offset, n);
    std::vector<T> v(params_.begin() + offset, params_.begin() + offset + n);
    const auto self = next_id();
    return push(std::move(v), [this, self, offset, n] {
      const auto& g = grads_[self];
      for (std::size_t i = 0; i < n; ++i) param_grad_[offset + i] += g[i];
    });
  }

  /// Row `row` of a row-major parameter matrix starting at `offset`.
  Var param_row(std::size_t offset, std::size_t row, std::size_t cols) {
    return param(offset + row * cols, cols);
  }

  // ----------------------------------------------------------- linear ops

  /// W x for a row-major rows x cols parameter matrix at `offset`.
  Var matvec(std::size_t offset, std::size_t rows, std::size_t cols, Var x) {
    check_param_range(offset, rows * cols);
    check_dim(x, cols, "matvec");
    const auto& xv = values_[x.id];
    std::vector<T> y(rows, T(0.0));
    for (std::size_t r = 0; r < rows; ++r) {
      const T* w = params_.data() + offset + r * cols;
      T acc(0.0);
      for (std::size_t c = 0; c < cols; ++c) acc += w[c] * xv[c];
      y[r] = acc;
    }
    const auto self = next_id();
    return push(std::move(y), [this, self, offset, rows, cols, x] {
      const auto& g = grads_[self];
      auto& gx = grads_[x.id];
      const auto& xv = values_[x.id];
      for (std::size_t r = 0; r < rows; ++r) {
        const T gr = g[r];
        const T* w = params_.data() + offset + r * cols;
        T* gw = param_grad_.data() + offset + r * cols;
        for (std::size_t c = 0; c < cols; ++c) {
          gx[c] += w[c] * gr;
          gw[c] += gr * xv[c];
        }
      }
    });
  }

  /// a + (parameter vector at offset).
  Var add_param(Var a, std::size_t offset) {
    const auto n = dim(a);
    check_param_range(offset, n);
    std::vector<T> y = values_[a.id];
    for (std::size_t i = 0; i < n; ++i) y[i] += params_[offset + i];
    const auto self = next_id();
    return push(std::move(y), [this, self, a, offset, n] {
      const auto& g = grads_[self];
      auto& ga = grads_[a.id];
      for (std::size_t i = 0; i < n; ++i) {
        ga[i] += g[i];
        param_grad_[offset + i] += g[i];
      }
    });
  }

  Var add(Var a, Var b) {
    check_dim(b, dim(a), "add");
    std::vector<T> y = values_[a.id];
    const auto& bv = values_[b.id];
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
    const auto self = next_id();
    return push(std::move(y), [this, self, a, b] {
      const auto& g = grads_[self];
      auto& ga = grads_[a.id];
      auto& gb = grads_[b.id];
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i];
        gb[i] += g[i];
      }
    });
  }

  Var sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

  Var scale(Var a, double c) {
    std::vector<T> y = values_[a.id];
    for (auto& e : y) e = e * T(c);
    const auto self = next_id();
    return push(std::move(y), [this, self, a, c] {
      const auto& g = grads_[self];
      auto& ga = grads_[a.id];
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * T(c);
    });
  }

  /// Elementwise product.
  Var mul(Var a, Var b) {
    check_dim(b, dim(a), "mul");
    const auto& av = values_[a.id];
    const auto& bv = values_[b.id];
    std::vector<T> y(av.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
    const auto self = next_id();
    return push(std::move(y), [this, self, a, b] {
      const auto& g = grads_[self];
      const auto& av = values_[a.id];
      const auto& bv = values_[b.id];
      auto& ga = grads_[a.id];
      auto& gb = grads_[b.id];
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i] * bv[i];
        gb[i] += g[i] * av[i];
      }
    });
  }

  Var concat(Var a, Var b) {
    const auto na = dim(a);
    std::vector<T> y = values_[a.id];
    const auto& bv = values_[b.id];
    y.insert(y.end(), bv.begin(), bv.end());
    const auto self = next_id();
    return push(std::move(y), [this, self, a, b, na] {
      const auto& g = grads_[self];
      auto& ga = grads_[a.id];
      auto& gb = grads_[b.id];
      for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
    });
  }

  Var slice(Var a, std::size_t start, std::size_t len) {
    if (start + len > dim(a)) throw std::out_of_range("slice out of range");
    const auto& av = values_[a.id];
    std::vector<T> y(av.begin() + start, av.begin() + start + len);
    const auto self = next_id();
    return push(std::move(y), [this, self, a, start, len] {
      const auto& g = grads_[self];
      auto& ga = grads_[a.id];
      for (std::size_t i = 0; i < len; ++i) ga[start + i] += g[i];
    });
  }

  /// Elementwise mean of equally sized vectors.
  Var mean(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::invalid_argument("mean of no vectors");
    const auto n = dim(xs.front());
    std::vector<T> y(n, T(0.0));
    const double w = 1.0 / static_cast<double>(xs.size());
    for (Var x : xs) {
      check_dim(x, n, "mean");
      const auto& xv = values_[x.id];
      for (std::size_t i = 0; i < n; ++i) y[i] += xv[i];
    }
    for (auto& e : y) e = e * T(w);
    const auto self = next_id();
    return push(std::move(y), [this, self, xs, w] {
      const auto& g = grads_[self];
      for (Var x : xs) {
        auto& gx = grads_[x.id];
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * T(w);
      }
    });
  }

  /// Sum of scalar nodes.
  Var sum_scalars(const std::vector<Var>& xs) {
    T acc(0.0);
    for (Var x : xs) acc += scalar(x);
    const auto self = next_id();
    return push({acc}, [this, self, xs] {
      const T g = grads_[self][0];
      for (Var x : xs) grads_[x.id][0] += g;
    });
  }

  /// Sum of all entries.
  Var sum(Var a) {
    T acc(0.0);
    for (const auto& e : values_[a.id]) acc += e;
    const auto self = next_id();
    return push({acc}, [this, self, a] {
      const T g = grads_[self][0];
      for (auto& e : grads_[a.id]) e += g;
    });
  }

  Var dot(Var a, Var b) {
    check_dim(b, dim(a), "dot");
    const auto& av = values_[a.id];
    const auto& bv = values_[b.id];
    T acc(0.0);
    for (std::size_t i = 0; i < av.size(); ++i) acc += av[i] * bv[i];
    const auto self = next_id();
    return push({acc}, [this, self, a, b] {
      const T g = grads_[self][0];
      const auto& av = values_[a.id];
      const auto& bv = values_[b.id];
      auto& ga = grads_[a.id];
      auto& gb = grads_[b.id];
      for (std::size_t i = 0; i < av.size(); ++i) {
        ga[i] += g * bv[i];
        gb[i] += g * av[i];
      }
    });
  }

  /// Sum of squares.
  Var sq_norm(Var a) { return dot(a, a); }

  /// [q . k_1, ..., q . k_n]
  Var dots(Var q, const std::vector<Var>& keys) {
    const auto n = dim(q);
    const auto& qv = values_[q.id];
    std::vector<T> y(keys.size(), T(0.0));
    for (std::size_t i = 0; i < keys.size(); ++i) {
      check_dim(keys[i], n, "dots");
      const auto& kv = values_[keys[i].id];
      T acc(0.0);
      for (std::size_t c = 0; c < n; ++c) acc += qv[c] * kv[c];
      y[i] = acc;
    }
    const auto self = next_id();
    return push(std::move(y), [this, self, q, keys, n] {
      const auto& g = grads_[self];
      const auto& qv = values_[q.id];
      auto& gq = grads_[q.id];
      for (std::size_t i = 0; i < keys.size(); ++i) {
        const auto& kv = values_[keys[i].id];
        auto& gk = grads_[keys[i].id];
        for (std::size_t c = 0; c < n; ++c) {
          gq[c] += g[i] * kv[c];
          gk[c] += g[i] * qv[c];
        }
      }
    });
  }

  /// sum_i w_i * v_i for vectors v_i.
  Var weighted_sum(Var w, const std::vector<Var>& vals) {
    check_dim(w, vals.size(), "weighted_sum");
    if (vals.empty()) throw std::invalid_argument("weighted_sum of no vectors");
    const auto n = dim(vals.front());
    const auto& wv = values_[w.id];
    std::vector<T> y(n, T(0.0));
    for (std::size_t i = 0; i < vals.size(); ++i) {
      check_dim(vals[i], n, "weighted_sum");
      const auto& vv = values_[vals[i].id];
      for (std::size_t c = 0; c < n; ++c) y[c] += wv[i] * vv[c];
    }
    const auto self = next_id();
    return push(std::move(y), [this, self, w, vals, n] {
      const auto& g = grads_[self];
      const auto& wv = values_[w.id];
      auto& gw = grads_[w.id];
      for (std::size_t i = 0; i < vals.size(); ++i) {
        const auto& vv = values_[vals[i].id];
        auto& gv = grads_[vals[i].id];
        T acc(0.0);
        for (std::size_t c = 0; c < n; ++c) {
          acc += g[c] * vv[c];
          gv[c] += g[c] * wv[i];
        }
        gw[i] += acc;
      }
    });
  }

  // ------------------------------------------------------- nonlinearities

  Var tanh(Var a) {
    using std::tanh;
    std::vector<T> y = values_[a.id];
    for (auto& e : y) e = tanh(e);
    const auto self = next_id();
    return push(std::move(y), [this, self, a] {
      const auto& g = grads_[self];
      const auto& y = values_[self];
      auto& ga = grads_[a.id];
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (T(1.0) - y[i] * y[i]);
    });
  }

  Var sigmoid(Var a) {
    std::vector<T> y = values_[a.id];
    for (auto& e : y) e = logistic(e);
    const auto self = next_id();
    return push(std::move(y), [this, self, a] {
      const auto& g = grads_[self];
      const auto& y = values_[self];
      auto& ga = grads_[a.id];
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (T(1.0) - y[i]);
    });
  }

  /// log(1 + exp(x)), elementwise.
  Var softplus(Var a) {
    using std::exp;
    using std::log1p;
    std::vector<T> y = values_[a.id];
    for (auto& e : y) {
      e = value_of(e) > 0.0 ? e + log1p(exp(-e)) : log1p(exp(e));
    }
    const auto self = next_id();
    return push(std::move(y), [this, self, a] {
      const auto& g = grads_[self];
      const auto& av = values_[a.id];
      auto& ga = grads_[a.id];
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * logistic(av[i]);
    });
  }

  Var softmax(Var a) {
    std::vector<T> y = softmax_values(values_[a.id]);
    const auto self = next_id();
    return push(std::move(y), [this, self, a] {
      const auto& g = grads_[self];
      const auto& y = values_[self];
      auto& ga = grads_[a.id];
      T gy(0.0);
      for (std::size_t i = 0; i < g.size(); ++i) gy += g[i] * y[i];
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += y[i] * (g[i] - gy);
    });
  }

  /// -log of the softmax mass that `logits` assigns to `subset`:
  /// logsumexp(logits) - logsumexp(logits[subset]).
  Var neg_log_mass(Var logits, std::vector<std::size_t> subset) {
    if (subset.empty()) throw std::invalid_argument("neg_log_mass: empty event");
    const auto& lv = values_[logits.id];
    for (auto i : subset) {
      if (i >= lv.size()) throw std::out_of_range("neg_log_mass: index out of range");
    }
    const T all = logsumexp(lv, nullptr);
    const T part = logsumexp(lv, &subset);
    const auto self = next_id();
    return push({all - part}, [this, self, logits, subset, all, part] {
      using std::exp;
      const T g = grads_[self][0];
      const auto& lv = values_[logits.id];
      auto& gl = grads_[logits.id];
      for (std::size_t i = 0; i < lv.size(); ++i) gl[i] += g * exp(lv[i] - all);
      for (auto i : subset) gl[i] -= g * exp(lv[i] - part);
    });
  }

  /// 1/2 * || onehot(k) - q ||^2.
  Var half_sq_dist_to_onehot(Var q, std::size_t k) {
    const auto& qv = values_[q.id];
    if (k >= qv.size()) throw std::out_of_range("half_sq_dist_to_onehot: class out of range");
    T acc(0.0);
    for (std::size_t i = 0; i < qv.size(); ++i) {
      const T diff = (i == k ? T(1.0) : T(0.0)) - qv[i];
      acc += diff * diff;
    }
    const auto self = next_id();
    return push({acc * T(0.5)}, [this, self, q, k] {
      const T g = grads_[self][0];
      const auto& qv = values_[q.id];
      auto& gq = grads_[q.id];
      for (std::size_t i = 0; i < qv.size(); ++i) {
        gq[i] += g * (qv[i] - (i == k ? T(1.0) : T(0.0)));
      }
    });
  }

  // ----------------------------------------------------------- LSTM cells
  //
  // `pre` stacks the three gate pre-activations [u | i | o] of width H.
  // Cell without forget gate: c = tanh(u) * sigmoid(i) + c_prev.

  Var lstm_cell(Var pre, Var c_prev) {
    using std::tanh;
    const auto h = dim(c_prev);
    check_dim(pre, 3 * h, "lstm_cell");
    const auto& pv = values_[pre.id];
    std::vector<T> c = values_[c_prev.id];
    for (std::size_t k = 0; k < h; ++k) c[k] += tanh(pv[k]) * logistic(pv[h + k]);
    const auto self = next_id();
    return push(std::move(c), [this, self, pre, c_prev, h] {
      using std::tanh;
      const auto& g = grads_[self];
      const auto& pv = values_[pre.id];
      auto& gp = grads_[pre.id];
      auto& gc = grads_[c_prev.id];
      for (std::size_t k = 0; k < h; ++k) {
        const T u = tanh(pv[k]);
        const T i = logistic(pv[h + k]);
        gc[k] += g[k];
        gp[k] += g[k] * i * (T(1.0) - u * u);
        gp[h + k] += g[k] * u * i * (T(1.0) - i);
      }
    });
  }

  /// h = sigmoid(o) * tanh(c).
  Var lstm_hidden(Var pre, Var c) {
    using std::tanh;
    const auto h = dim(c);
    check_dim(pre, 3 * h, "lstm_hidden");
    const auto& pv = values_[pre.id];
    const auto& cv = values_[c.id];
    std::vector<T> y(h);
    for (std::size_t k = 0; k < h; ++k) y[k] = logistic(pv[2 * h + k]) * tanh(cv[k]);
    const auto self = next_id();
    return push(std::move(y), [this, self, pre, c, h] {
      using std::tanh;
      const auto& g = grads_[self];
      const auto& pv = values_[pre.id];
      const auto& cv = values_[c.id];
      auto& gp = grads_[pre.id];
      auto& gc = grads_[c.id];
      for (std::size_t k = 0; k < h; ++k) {
        const T o = logistic(pv[2 * h + k]);
        const T tc = tanh(cv[k]);
        gp[2 * h + k] += g[k] * tc * o * (T(1.0) - o);
        gc[k] += g[k] * o * (T(1.0) - tc * tc);
      }
    });
  }

  // ------------------------------------------------------------- backward

  /// Reverse sweep from scalar `out`; parameter adjoints are added into the
  /// gradient buffer given at construction.
  void backward(Var out, T seed = T(1.0)) {
    if (!records()) throw std::logic_error("backward on a forward-only tape");
    if (dim(out) != 1) throw std::invalid_argument("backward needs a scalar output");
    grads_.resize(values_.size());
    for (std::size_t i = 0; i <= out.id; ++i) {
      grads_[i].assign(values_[i].size(), T(0.0));
    }
    grads_[out.id][0] = seed;
    for (std::size_t i = out.id + 1; i-- > 0;) {
      if (backward_[i]) backward_[i]();
    }
  }

  // ------------------------------------------------------------ utilities

  static T logistic(const T& x) {
    using std::exp;
    if (value_of(x) >= 0.0) return T(1.0) / (T(1.0) + exp(-x));
    const T e = exp(x);
    return e / (T(1.0) + e);
  }

  static std::vector<T> softmax_values(const std::vector<T>& a) {
    using std::exp;
    std::vector<T> y(a.size());
    if (a.empty()) return y;
    T mx = a[0];
    for (const auto& e : a) {
      if (value_of(e) > value_of(mx)) mx = e;
    }
    T z(0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
      y[i] = exp(a[i] - mx);
      z += y[i];
    }
    for (auto& e : y) e = e / z;
    return y;
  }

 private:
  std::uint32_t next_id() const { return static_cast<std::uint32_t>(values_.size()); }

  Var push(std::vector<T>&& v, std::function<void()> fn) {
    const Var out{next_id()};
    values_.push_back(std::move(v));
    backward_.push_back(records() ? std::move(fn) : std::function<void()>{});
    return out;
  }

  void check_dim(Var x, std::size_t n, const char* op) const {
    if (dim(x) != n) {
      throw std::invalid_argument(std::string(op) + ": expected dimension " + std::to_string(n) +
                                  ", got " + std::to_string(dim(x)));
    }
  }

  void check_param_range(std::size_t offset, std::size_t n) const {
    if (offset + n > params_.size()) throw std::out_of_range("parameter slice out of range");
  }

  static T logsumexp(const std::vector<T>& a, const std::vector<std::size_t>* subset) {
    using std::exp;
    using std::log;
    auto at = [&](std::size_t k) -> const T& { return subset ? a[(*subset)[k]] : a[k]; };
    const std::size_t n = subset ? subset->size() : a.size();
    T mx = at(0);
    for (std::size_t k = 1; k < n; ++k) {
      if (value_of(at(k)) > value_of(mx)) mx = at(k);
    }
    T z(0.0);
    for (std::size_t k = 0; k < n; ++k) z += exp(at(k) - mx);
    return mx + log(z);
  }

  std::span<const T> params_;
  std::span<T> param_grad_;
  std::vector<std::vector<T>> values_;
  std::vector<std::vector<T>> grads_;
  std::vector<std::function<void()>> backward_;
};

}  // namespace zshot::ad
