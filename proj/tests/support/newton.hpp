#pragma once

// Closed-form logistic regression for influence checks: the loss, gradient
// and Hessian are written out by hand and the optimum is found by damped
// Newton with a dense Cholesky solve. Nothing here touches the tape.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "support/losses.hpp"

namespace zshot::testing {

/// Matches Logistic{dim, l2}: params are w (dim) then b.
struct LogisticOracle {
  std::size_t dim;
  double l2;

  static double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }
  static double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

  double margin(const std::vector<double>& th, const Point& p) const {
    double z = th[dim];
    for (std::size_t i = 0; i < dim; ++i) z += th[i] * p.x[i];
    return z;
  }

  double loss(const std::vector<double>& th, const Point& p) const {
    double w2 = 0.0;
    for (std::size_t i = 0; i < dim; ++i) w2 += th[i] * th[i];
    return softplus(-p.y * margin(th, p)) + 0.5 * l2 * w2;
  }

  double mean_loss(const std::vector<double>& th, const std::vector<Point>& pts) const {
    double s = 0.0;
    for (const auto& p : pts) s += loss(th, p);
    return s / static_cast<double>(pts.size());
  }

  /// Gradient and Hessian of the mean loss.
  void derivatives(const std::vector<double>& th, const std::vector<Point>& pts,
                   std::vector<double>& g, std::vector<std::vector<double>>& H) const {
    const std::size_t n = dim + 1;
    g.assign(n, 0.0);
    H.assign(n, std::vector<double>(n, 0.0));
    const double inv = 1.0 / static_cast<double>(pts.size());
    for (const auto& p : pts) {
      const double s = sigmoid(-p.y * margin(th, p));  // d softplus(-y z)/dz = -y s
      const double c = s * (1.0 - s);
      for (std::size_t i = 0; i < n; ++i) {
        const double xi = i < dim ? p.x[i] : 1.0;
        g[i] += inv * (-p.y * s * xi);
        for (std::size_t j = 0; j < n; ++j) {
          const double xj = j < dim ? p.x[j] : 1.0;
          H[i][j] += inv * c * xi * xj;
        }
      }
    }
    for (std::size_t i = 0; i < dim; ++i) {
      g[i] += l2 * th[i];
      H[i][i] += l2;
    }
  }

  /// argmin of the mean loss over `pts`, starting at `th`.
  std::vector<double> fit(const std::vector<Point>& pts, std::vector<double> th) const {
    std::vector<double> g;
    std::vector<std::vector<double>> H;
    for (int it = 0; it < 100; ++it) {
      derivatives(th, pts, g, H);
      double gn = 0.0;
      for (double x : g) gn += x * x;
      if (std::sqrt(gn) < 1e-13) break;
      const auto step = cholesky_solve(H, g);
      double t = 1.0;
      const double f0 = mean_loss(th, pts);
      std::vector<double> trial(th.size());
      for (int k = 0; k < 40; ++k) {
        for (std::size_t i = 0; i < th.size(); ++i) trial[i] = th[i] - t * step[i];
        if (mean_loss(trial, pts) <= f0) break;
        t *= 0.5;
      }
      th = trial;
    }
    return th;
  }

  static std::vector<double> cholesky_solve(std::vector<std::vector<double>> A, std::vector<double> b) {
    const std::size_t n = b.size();
    for (std::size_t j = 0; j < n; ++j) {
      double d = A[j][j];
      for (std::size_t k = 0; k < j; ++k) d -= A[j][k] * A[j][k];
      if (!(d > 0.0)) throw std::runtime_error("cholesky: matrix not positive definite");
      A[j][j] = std::sqrt(d);
      for (std::size_t i = j + 1; i < n; ++i) {
        double s = A[i][j];
        for (std::size_t k = 0; k < j; ++k) s -= A[i][k] * A[j][k];
        A[i][j] = s / A[j][j];
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < i; ++k) b[i] -= A[i][k] * b[k];
      b[i] /= A[i][i];
    }
    for (std::size_t i = n; i-- > 0;) {
      for (std::size_t k = i + 1; k < n; ++k) b[i] -= A[k][i] * b[k];
      b[i] /= A[i][i];
    }
    return b;
  }
};

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

/// Average ranks, ties sharing the mean rank.
inline std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j) + 1.0;
    i = j + 1;
  }
  return r;
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  return pearson(ranks(a), ranks(b));
}

}  // namespace zshot::testing
