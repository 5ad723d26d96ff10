#pragma once

#include <initializer_list>
#include <random>
#include <string>
#include <vector>

#include "slidecraft/control.hpp"
#include "slidecraft/errors.hpp"
#include "slidecraft/model.hpp"

namespace slidecraft::testing {

struct SystemText {
  int n = 1, m = 1;
  std::vector<std::string> f1, f2;
  std::string h = "x1";
  std::string phi = "0";
  std::vector<std::string> g1, g2;
  std::vector<double> lo, hi, x0;
  double t0 = 0.0, tf = 1.0;
};

inline HybridSystem make_system(const SystemText& t) {
  HybridSystem s;
  s.n = t.n;
  s.m = t.m;
  for (const auto& e : t.f1) s.f1.push_back(parse_expression(e, t.n, t.m));
  for (const auto& e : t.f2.empty() ? t.f1 : t.f2) s.f2.push_back(parse_expression(e, t.n, t.m));
  s.h = parse_expression(t.h, t.n, 0);
  s.phi = parse_expression(t.phi, t.n, 0);
  for (const auto& e : t.g1) s.g1.push_back(parse_expression(e, t.n, 0));
  for (const auto& e : t.g2) s.g2.push_back(parse_expression(e, t.n, 0));
  s.u_lo = Vec::Constant(t.m, -10.0);
  s.u_hi = Vec::Constant(t.m, 10.0);
  for (int j = 0; j < static_cast<int>(t.lo.size()); ++j) s.u_lo[j] = t.lo[j];
  for (int j = 0; j < static_cast<int>(t.hi.size()); ++j) s.u_hi[j] = t.hi[j];
  s.x0 = Vec::Zero(t.n);
  for (int i = 0; i < static_cast<int>(t.x0.size()); ++i) s.x0[i] = t.x0[i];
  s.t0 = t.t0;
  s.tf = t.tf;
  validate_system(s);
  return s;
}

inline Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<int>(v.size()));
  int i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

inline ControlGrid constant_control(const HybridSystem& sys, int N, double value,
                                    Basis basis = Basis::PiecewiseConstant) {
  ControlGrid u(N, basis, sys.t0, sys.tf, sys.m);
  u.values.setConstant(value);
  return u;
}

template <typename F>
Errc error_code(F&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return static_cast<Errc>(-1);
}

/// The relay demo: f1 = (1, 1), f2 = (1, -1), h = x2 on [0, 2].
inline HybridSystem relay_demo() {
  SystemText t;
  t.n = 2;
  t.m = 1;
  t.f1 = {"1", "1"};
  t.f2 = {"1", "-1"};
  t.h = "x2";
  t.phi = "x1";
  t.x0 = {0.0, -1.0};
  t.tf = 2.0;
  return make_system(t);
}

}  // namespace slidecraft::testing

namespace slidecraft::testing {

/// Sliding problem with a curved surface; at u ≡ 0 the state ends at
/// (e^{-2}, -0.1 sin(e^{-2})).
inline HybridSystem relay2d() {
  SystemText t;
  t.n = 2;
  t.m = 1;
  t.f1 = {"-x1 + u1", "1 + 0.5*u1 + 0.1*x1^2"};
  t.f2 = {"-x1 + 2*u1", "-1 + 0.5*u1 - 0.2*x1"};
  t.h = "x2 + 0.1*sin(x1)";
  t.phi = "(x1 - 0.3)^2";
  t.x0 = {1.0, -0.93};
  t.lo = {-0.5};
  t.hi = {0.5};
  t.tf = 2.0;
  return make_system(t);
}

}  // namespace slidecraft::testing

namespace slidecraft::testing {

/// Transversal crossing from mode 1 to mode 2 through a slanted line.
inline HybridSystem crossing2d() {
  SystemText t;
  t.n = 2;
  t.m = 1;
  t.f1 = {"1 + 0.2*sin(x2)", "1.2 + u1 - 0.1*x1^2"};
  t.f2 = {"1 + 0.5*u1", "0.9 + 0.2*x1*u1 + 0.1*x2"};
  t.h = "x2 - 0.5*x1";
  t.phi = "(x1 - 2.5)^2 + (x2 - 1.9)^2";
  t.x0 = {0.0, -0.5};
  t.lo = {-0.5};
  t.hi = {0.5};
  t.tf = 2.0;
  return make_system(t);
}

/// Starts sliding on x2 = 0 and leaves to mode 1 where α reaches 0; the exit
/// guard depends on u.
inline HybridSystem exit2d() {
  SystemText t;
  t.n = 2;
  t.m = 1;
  t.f1 = {"1 + 0.2*x2", "u1 - 0.5*x1"};
  t.f2 = {"1 - x2 + 0.3*u1", "-1 + 0.1*x1"};
  t.h = "x2";
  t.phi = "x2^2 + x1*x2 + 0.5*x1";
  t.x0 = {0.0, 0.0};
  t.lo = {0.0};
  t.hi = {1.0};
  t.tf = 2.0;
  return make_system(t);
}

}  // namespace slidecraft::testing

namespace slidecraft::testing {

/// Coefficients uniform in [-scale, scale].
inline ControlGrid random_grid(const HybridSystem& sys, int N, double scale, unsigned seed,
                               Basis basis = Basis::PiecewiseConstant) {
  ControlGrid g(N, basis, sys.t0, sys.tf, sys.m);
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> U(-scale, scale);
  for (int r = 0; r < g.values.rows(); ++r)
    for (int c = 0; c < g.values.cols(); ++c) g.values(r, c) = U(rng);
  return g;
}

}  // namespace slidecraft::testing
