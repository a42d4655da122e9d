#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "zshot/autodiff/dual.hpp"
#include "zshot/autodiff/param_vector.hpp"
#include "zshot/autodiff/tape.hpp"

namespace zshot::ad {

/// Non-finite loss or gradient while evaluating a sample.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, std::string example_id)
      : std::runtime_error(what + " (example " + example_id + ")"),
        example_id_(std::move(example_id)) {}
  const std::string& example_id() const { return example_id_; }

 private:
  std::string example_id_;
};

/// A per-sample loss that can be recorded on both the double and the Dual tape.
template <class F, class S>
concept LossFunction = requires(const F& f, const S& s, Tape<double>& td, Tape<Dual>& tx) {
  { f.evaluate(td, s) } -> std::same_as<Var>;
  { f.evaluate(tx, s) } -> std::same_as<Var>;
  { f.sample_id(s) } -> std::convertible_to<std::string>;
};

enum class Reduction { kMean, kSum };

struct ValueAndGrad {
  double value = 0.0;
  GradVector gradient;
};

namespace detail {

template <class S>
void require_batch(std::span<const S> batch, const char* op) {
  if (batch.empty()) throw std::invalid_argument(std::string(op) + ": empty batch");
}

inline void require_finite(const ParamVector& p, const char* op) {
  if (!p.all_finite()) throw std::invalid_argument(std::string(op) + ": non-finite parameters");
}

inline double reduction_weight(Reduction r, std::size_t n) {
  return r == Reduction::kMean ? 1.0 / static_cast<double>(n) : 1.0;
}

}  // namespace detail

/// Loss over a batch without recording a tape.
template <class F, class S>
  requires LossFunction<F, S>
double loss(const F& f, const ParamVector& params, std::span<const S> batch,
            Reduction reduction = Reduction::kMean) {
  detail::require_batch(batch, "loss");
  double total = 0.0;
  for (const auto& s : batch) {
    Tape<double> tape(params.values(), {});
    const double v = tape.scalar(f.evaluate(tape, s));
    if (!std::isfinite(v)) throw NumericError("non-finite loss", f.sample_id(s));
    total += v;
  }
  return total * detail::reduction_weight(reduction, batch.size());
}

/// Loss and its gradient over a batch; samples are reduced in batch order.
template <class F, class S>
  requires LossFunction<F, S>
ValueAndGrad value_and_grad(const F& f, const ParamVector& params, std::span<const S> batch,
                            Reduction reduction = Reduction::kMean) {
  detail::require_batch(batch, "grad");
  detail::require_finite(params, "grad");
  std::vector<double> g(params.size(), 0.0);
  double total = 0.0;
  for (const auto& s : batch) {
    Tape<double> tape(params.values(), g);
    const Var out = f.evaluate(tape, s);
    const double v = tape.scalar(out);
    if (!std::isfinite(v)) throw NumericError("non-finite loss", f.sample_id(s));
    total += v;
    tape.backward(out);
    for (double x : g) {
      if (!std::isfinite(x)) throw NumericError("non-finite gradient", f.sample_id(s));
    }
  }
  const double w = detail::reduction_weight(reduction, batch.size());
  for (double& x : g) x *= w;
  return {total * w, GradVector(params.layout_ptr(), std::move(g))};
}

/// Gradient of the mean loss over `batch`.
template <class F, class S>
  requires LossFunction<F, S>
GradVector grad(const F& f, const ParamVector& params, std::span<const S> batch,
                Reduction reduction = Reduction::kMean) {
  return value_and_grad(f, params, batch, reduction).gradient;
}

/// Exact H(theta) v of the mean loss: the Dual tangent of the reverse sweep.
template <class F, class S>
  requires LossFunction<F, S>
GradVector hvp_exact(const F& f, const ParamVector& params, std::span<const S> batch,
                     const GradVector& v, Reduction reduction = Reduction::kMean) {
  detail::require_batch(batch, "hvp_exact");
  check_same_length(params.size(), v.size(), "hvp_exact");
  std::vector<Dual> theta(params.size());
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] = Dual(params[i], v[i]);
  std::vector<Dual> g(params.size());
  for (const auto& s : batch) {
    Tape<Dual> tape(theta, g);
    const Var out = f.evaluate(tape, s);
    if (!std::isfinite(value_of(tape.scalar(out)))) {
      throw NumericError("non-finite loss", f.sample_id(s));
    }
    tape.backward(out);
  }
  const double w = detail::reduction_weight(reduction, batch.size());
  std::vector<double> hv(params.size());
  for (std::size_t i = 0; i < hv.size(); ++i) {
    hv[i] = g[i].d * w;
    if (!std::isfinite(hv[i])) throw NumericError("non-finite Hessian-vector product", "batch");
  }
  return GradVector(params.layout_ptr(), std::move(hv));
}

/// Forward-difference H(theta) v = (g(theta + eps v) - g(theta)) / eps.
template <class F, class S>
  requires LossFunction<F, S>
GradVector hvp_fd(const F& f, const ParamVector& params, std::span<const S> batch,
                  const GradVector& v, double eps, Reduction reduction = Reduction::kMean) {
  if (!(eps > 0.0)) throw std::invalid_argument("hvp_fd: eps must be positive");
  check_same_length(params.size(), v.size(), "hvp_fd");
  if (!v.all_finite()) throw std::invalid_argument("hvp_fd: non-finite direction");
  const auto g0 = grad(f, params, batch, reduction);
  const auto g1 = grad(f, axpy(params, eps, v), batch, reduction);
  std::vector<double> out(params.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (g1[i] - g0[i]) / eps;
  return GradVector(params.layout_ptr(), std::move(out));
}

// ------------------------------------------------------------ inverse HVP

struct CgOptions {
  double damping = 0.01;
  double tol = 1e-4;
  int max_iter = 200;
};

struct SolverDiagnostics {
  int iterations = 0;
  /// ||(H + damping I) x - v|| / ||v|| for the returned x.
  double residual = 0.0;
  bool converged = true;
  bool negative_curvature = false;
};

struct InverseHvp {
  GradVector solution;
  SolverDiagnostics diagnostics;
};

using LinearOperator = std::function<GradVector(const GradVector&)>;

/// Conjugate gradient on (A + damping I) x = v. Stops on convergence,
/// max_iter, or a non-positive curvature direction and flags failure instead
/// of throwing. Returns the last iterate, or after a non-positive curvature
/// direction the iterate with the smallest recurrence residual.
inline InverseHvp conjugate_gradient(const LinearOperator& apply, const GradVector& v,
                                     const CgOptions& opt) {
  if (opt.damping < 0.0) throw std::invalid_argument("inverse_hvp: damping must be >= 0");
  if (!(opt.tol > 0.0)) throw std::invalid_argument("inverse_hvp: tol must be positive");
  const std::size_t n = v.size();
  const double v_norm = norm(v);
  if (v_norm == 0.0) return {GradVector::zeros(v.layout_ptr()), {}};

  auto apply_damped = [&](const GradVector& p) { return axpy(apply(p), opt.damping, p); };

  std::vector<double> x(n, 0.0);
  std::vector<double> r(v.values().begin(), v.values().end());
  std::vector<double> p = r;
  double rs = v_norm * v_norm;
  std::vector<double> best = x;
  double best_rs = rs;

  SolverDiagnostics diag;
  diag.converged = false;
  const double target = opt.tol * v_norm;
  while (diag.iterations < opt.max_iter) {
    const GradVector pv = v.with_values(p);
    const GradVector ap = apply_damped(pv);
    const double pap = dot(pv, ap);
    if (!(pap > 0.0)) {
      diag.negative_curvature = true;
      break;
    }
    const double alpha = rs / pap;
    double rs_new = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
      rs_new += r[i] * r[i];
    }
    ++diag.iterations;
    if (rs_new < best_rs) {
      best_rs = rs_new;
      best = x;
    }
    if (std::sqrt(rs_new) <= target) break;
    const double beta = rs_new / rs;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
    rs = rs_new;
  }

  GradVector solution = v.with_values(diag.negative_curvature ? std::move(best) : std::move(x));
  const GradVector check = apply_damped(solution);
  double res = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = check[i] - v[i];
    res += e * e;
  }
  diag.residual = std::sqrt(res) / v_norm;
  diag.converged = !diag.negative_curvature && diag.residual <= opt.tol;
  return {std::move(solution), diag};
}

/// (H + damping I)^{-1} v where H is the Hessian of the mean loss over
/// `train`, evaluated with exact HVPs in fixed batch order.
template <class F, class S>
  requires LossFunction<F, S>
InverseHvp inverse_hvp(const F& f, const ParamVector& params, std::span<const S> train,
                       const GradVector& v, const CgOptions& opt = {}) {
  check_same_length(params.size(), v.size(), "inverse_hvp");
  detail::require_batch(train, "inverse_hvp");
  return conjugate_gradient(
      [&](const GradVector& p) { return hvp_exact(f, params, train, p); }, v, opt);
}

}  // namespace zshot::ad
