#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace slidecraft {

/// Constant with the same nesting shape as `like`.
inline double lift_like(double, double c) { return c; }

/// Forward-mode dual number with a runtime-sized tangent. Nesting
/// Dual<Dual<double>> yields exact second derivatives.
template <typename T>
struct Dual {
  T v{};
  std::vector<T> d;

  Dual() = default;
  // Tangent entries share the nesting shape of the value, so mixed-depth
  // arithmetic never meets an empty inner tangent.
  Dual(T value, std::size_t dim) : v(std::move(value)), d(dim, lift_like(v, 0.0)) {}
};

inline double primal(double a) { return a; }
template <typename T>
double primal(const Dual<T>& a) {
  return primal(a.v);
}

inline double pow_const(double a, double c) { return std::pow(a, c); }

template <typename T>
Dual<T> lift_like(const Dual<T>& like, double c) {
  return Dual<T>(lift_like(like.v, c), like.d.size());
}

// Scalars combine with duals of any depth through these helpers so the same
// arithmetic template serves double, Dual<double> and Dual<Dual<double>>.

template <typename T>
Dual<T> operator+(const Dual<T>& a, const Dual<T>& b) {
  Dual<T> r(a.v + b.v, a.d.size());
  for (std::size_t i = 0; i < a.d.size(); ++i) r.d[i] = a.d[i] + b.d[i];
  return r;
}

template <typename T>
Dual<T> operator-(const Dual<T>& a, const Dual<T>& b) {
  Dual<T> r(a.v - b.v, a.d.size());
  for (std::size_t i = 0; i < a.d.size(); ++i) r.d[i] = a.d[i] - b.d[i];
  return r;
}

template <typename T>
Dual<T> operator-(const Dual<T>& a) {
  Dual<T> r(-a.v, a.d.size());
  for (std::size_t i = 0; i < a.d.size(); ++i) r.d[i] = -a.d[i];
  return r;
}

template <typename T>
Dual<T> operator*(const Dual<T>& a, const Dual<T>& b) {
  Dual<T> r(a.v * b.v, a.d.size());
  for (std::size_t i = 0; i < a.d.size(); ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
  return r;
}

template <typename T>
Dual<T> operator/(const Dual<T>& a, const Dual<T>& b) {
  Dual<T> r(a.v / b.v, a.d.size());
  for (std::size_t i = 0; i < a.d.size(); ++i) r.d[i] = (a.d[i] - r.v * b.d[i]) / b.v;
  return r;
}

/// Scales the tangent by an inner-level factor: f(a) with f'(a) = slope.
template <typename T>
Dual<T> chain(const Dual<T>& a, T value, const T& slope) {
  Dual<T> r(std::move(value), a.d.size());
  for (std::size_t i = 0; i < a.d.size(); ++i) r.d[i] = slope * a.d[i];
  return r;
}

template <typename T>
Dual<T> sin(const Dual<T>& a) {
  using std::cos;
  using std::sin;
  return chain(a, sin(a.v), cos(a.v));
}

template <typename T>
Dual<T> cos(const Dual<T>& a) {
  using std::cos;
  using std::sin;
  return chain(a, cos(a.v), T(-sin(a.v)));
}

template <typename T>
Dual<T> exp(const Dual<T>& a) {
  using std::exp;
  T e = exp(a.v);
  return chain(a, e, e);
}

template <typename T>
Dual<T> log(const Dual<T>& a) {
  using std::log;
  return chain(a, log(a.v), T(lift_like(a.v, 1.0) / a.v));
}

template <typename T>
Dual<T> tanh(const Dual<T>& a) {
  using std::tanh;
  T t = tanh(a.v);
  return chain(a, t, T(lift_like(a.v, 1.0) - t * t));
}

template <typename T>
Dual<T> sqrt(const Dual<T>& a) {
  using std::sqrt;
  T s = sqrt(a.v);
  return chain(a, s, T(lift_like(a.v, 0.5) / s));
}

/// a^c for a constant exponent c.
template <typename T>
Dual<T> pow_const(const Dual<T>& a, double c) {
  T value = pow_const(a.v, c);
  T slope = (c == 0.0) ? lift_like(a.v, 0.0) : T(lift_like(a.v, c) * pow_const(a.v, c - 1.0));
  return chain(a, value, slope);
}

}  // namespace slidecraft
