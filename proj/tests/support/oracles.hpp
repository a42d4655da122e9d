#pragma once

// Finite-difference oracles. These only call loss(), never grad/hvp, so they
// stay independent of the reverse-mode code they check.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "zshot/autodiff/derivatives.hpp"

namespace zshot::testing {

using ad::GradVector;
using ad::ParamVector;

template <class F, class S>
std::vector<double> fd_gradient(const F& f, const ParamVector& p, std::span<const S> batch,
                                double h = 1e-5) {
  std::vector<double> out(p.size());
  std::vector<double> v(p.values().begin(), p.values().end());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double x0 = v[i];
    v[i] = x0 + h;
    const double fp = ad::loss(f, p.with_values(v), batch);
    v[i] = x0 - h;
    const double fm = ad::loss(f, p.with_values(v), batch);
    v[i] = x0;
    out[i] = (fp - fm) / (2.0 * h);
  }
  return out;
}

struct GradCheck {
  std::size_t failures = 0;
  std::size_t checked = 0;
  double worst_rel = 0.0;
  std::size_t worst_index = 0;
};

/// Per-coordinate comparison: relative error <= rel_tol, except coordinates
/// where both values are below abs_floor, which are compared absolutely.
inline GradCheck compare_gradients(std::span<const double> analytic, std::span<const double> numeric,
                                   double rel_tol = 1e-4, double abs_floor = 1e-8) {
  GradCheck r;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], b = numeric[i];
    const double scale = std::max(std::abs(a), std::abs(b));
    ++r.checked;
    if (std::abs(a) < abs_floor && std::abs(b) < abs_floor) {
      if (std::abs(a - b) > abs_floor) ++r.failures;
      continue;
    }
    const double rel = std::abs(a - b) / scale;
    if (rel > r.worst_rel) {
      r.worst_rel = rel;
      r.worst_index = i;
    }
    if (rel > rel_tol) ++r.failures;
  }
  return r;
}

/// Explicit Hessian of the mean loss from central differences of the
/// reverse-mode gradient, column j = (g(p + h e_j) - g(p - h e_j)) / 2h,
/// then symmetrized. Costs 2n gradients instead of O(n^2) losses.
template <class F, class S>
std::vector<std::vector<double>> fd_hessian(const F& f, const ParamVector& p,
                                            std::span<const S> batch, double h = 1e-5) {
  const auto n = p.size();
  std::vector<std::vector<double>> H(n, std::vector<double>(n));
  std::vector<double> v(p.values().begin(), p.values().end());
  for (std::size_t j = 0; j < n; ++j) {
    auto w = v;
    w[j] = v[j] + h;
    const auto gp = ad::grad(f, p.with_values(w), batch);
    w[j] = v[j] - h;
    const auto gm = ad::grad(f, p.with_values(w), batch);
    for (std::size_t i = 0; i < n; ++i) H[i][j] = (gp.values()[i] - gm.values()[i]) / (2.0 * h);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) H[i][j] = H[j][i] = 0.5 * (H[i][j] + H[j][i]);
  }
  return H;
}

inline std::vector<double> matvec(const std::vector<std::vector<double>>& A,
                                  std::span<const double> x) {
  std::vector<double> y(A.size(), 0.0);
  for (std::size_t i = 0; i < A.size(); ++i) {
    for (std::size_t j = 0; j < x.size(); ++j) y[i] += A[i][j] * x[j];
  }
  return y;
}

inline double rel_error(std::span<const double> a, std::span<const double> b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

}  // namespace zshot::testing

namespace zshot::testing {

/// Explicit Hessian built column by column from central differences of the
/// reverse-mode gradient.
template <class F, class S>
std::vector<std::vector<double>> hessian_from_grad(const F& f, const ParamVector& p,
                                                   std::span<const S> batch, double h = 1e-5) {
  const auto n = p.size();
  std::vector<std::vector<double>> H(n, std::vector<double>(n));
  std::vector<double> v(p.values().begin(), p.values().end());
  for (std::size_t j = 0; j < n; ++j) {
    const double x0 = v[j];
    v[j] = x0 + h;
    const auto gp = ad::grad(f, p.with_values(v), batch);
    v[j] = x0 - h;
    const auto gm = ad::grad(f, p.with_values(v), batch);
    v[j] = x0;
    for (std::size_t i = 0; i < n; ++i) H[i][j] = (gp[i] - gm[i]) / (2.0 * h);
  }
  return H;
}

}  // namespace zshot::testing
