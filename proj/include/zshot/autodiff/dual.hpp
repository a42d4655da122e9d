#pragma once

// First-order dual numbers. Running the reverse-mode tape over Dual instead of
// double gives forward-over-reverse second derivatives: seeding the parameter
// tangents with v makes the tangent part of the gradient equal to H v.

#include <cmath>
#include <ostream>

namespace zshot::ad {

struct Dual {
  double v = 0.0;  // value
  double d = 0.0;  // tangent

  constexpr Dual() = default;
  constexpr Dual(double value) : v(value) {}  // NOLINT(google-explicit-constructor)
  constexpr Dual(double value, double tangent) : v(value), d(tangent) {}

  Dual& operator+=(const Dual& o) {
    v += o.v;
    d += o.d;
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v -= o.v;
    d -= o.d;
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    d = d * o.v + v * o.d;
    v *= o.v;
    return *this;
  }

  friend Dual operator+(Dual a, const Dual& b) { return a += b; }
  friend Dual operator-(Dual a, const Dual& b) { return a -= b; }
  friend Dual operator*(Dual a, const Dual& b) { return a *= b; }
  friend Dual operator/(const Dual& a, const Dual& b) {
    const double q = a.v / b.v;
    return {q, (a.d - q * b.d) / b.v};
  }
  friend Dual operator-(const Dual& a) { return {-a.v, -a.d}; }

  friend bool operator<(const Dual& a, const Dual& b) { return a.v < b.v; }
  friend bool operator>(const Dual& a, const Dual& b) { return a.v > b.v; }

  friend Dual exp(const Dual& a) {
    const double e = std::exp(a.v);
    return {e, e * a.d};
  }
  friend Dual log(const Dual& a) { return {std::log(a.v), a.d / a.v}; }
  friend Dual log1p(const Dual& a) { return {std::log1p(a.v), a.d / (1.0 + a.v)}; }
  friend Dual tanh(const Dual& a) {
    const double t = std::tanh(a.v);
    return {t, (1.0 - t * t) * a.d};
  }
  friend Dual sqrt(const Dual& a) {
    const double s = std::sqrt(a.v);
    return {s, a.d / (2.0 * s)};
  }

  friend std::ostream& operator<<(std::ostream& os, const Dual& a) {
    return os << a.v << "+" << a.d << "e";
  }
};

inline double value_of(double x) { return x; }
inline double value_of(const Dual& x) { return x.v; }

inline double tangent_of(double) { return 0.0; }
inline double tangent_of(const Dual& x) { return x.d; }

}  // namespace zshot::ad
