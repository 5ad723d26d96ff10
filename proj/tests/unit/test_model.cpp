#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "support.hpp"

using namespace slidecraft;
using namespace slidecraft::testing;

namespace {

// Vertical fields of constant speed on h = x2, evaluated at the origin.
HybridSystem vertical(double c1, double c2) {
  SystemText t;
  t.n = 2;
  t.m = 1;
  t.f1 = {"0", std::to_string(c1)};
  t.f2 = {"0", std::to_string(c2)};
  t.h = "x2";
  return make_system(t);
}

const Vec origin = vec({0.0, 0.0});
const Vec u0 = vec({0.0});

}  // namespace

TEST_CASE("filippov_alpha") {
  CHECK(filippov_alpha(vertical(1, -1), origin, u0) == 0.5);
  CHECK(filippov_alpha(vertical(2, -1), origin, u0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(error_code([] { filippov_alpha(vertical(1, 1), origin, u0); }) == Errc::DegenerateFilippov);
  // unclamped outside [0, 1]
  CHECK(filippov_alpha(vertical(-1, -3), origin, u0) == -0.5);
}

TEST_CASE("filippov_field") {
  SystemText t;
  t.n = 2;
  t.f1 = {"1", "1"};
  t.f2 = {"1", "-1"};
  t.h = "x2";
  auto fv = filippov_field(make_system(t), origin, u0);
  CHECK(fv.alpha == 0.5);
  CHECK(fv.fF[0] == 1.0);
  CHECK(fv.fF[1] == 0.0);

  auto g = filippov_field(vertical(2, -1), origin, u0);
  CHECK(g.alpha == doctest::Approx(2.0 / 3.0));
  CHECK(std::abs(g.fF[0]) < 1e-15);
  CHECK(std::abs(g.fF[1]) < 1e-15);
}

TEST_CASE("sliding_residual_e") {
  auto sys = vertical(1, -1);
  CHECK(sliding_residual_e(sys, origin, u0, 0.0) == 0.0);
  CHECK(sliding_residual_e(vec({0, 1}).transpose(), vec({0.0, 0.02}), -0.02) == 0.0);
  // h_x = (0, 2), h_x f = 0.1: e = 0.1 + 4 z vanishes at z = -0.025
  Row hx = vec({0, 2}).transpose();
  Vec f = vec({0.0, 0.05});
  CHECK(sliding_residual_e(hx, f, -0.025) == doctest::Approx(0.0).epsilon(1e-16));
  CHECK(std::abs(consistent_z(sys, origin, u0)) == 0.0);
}

TEST_CASE("classify_transition: sign table") {
  auto enter = classify_transition(vertical(1, -1), 1, origin, u0, u0, Trigger::Surface);
  CHECK(enter.kind == TransitionKind::EnterSliding);
  CHECK(enter.q_next == 3);
  CHECK(enter.witness.hf1 > 0);
  CHECK(enter.witness.hf2 < 0);

  auto cross = classify_transition(vertical(1, 0.5), 1, origin, u0, u0, Trigger::Surface);
  CHECK(cross.kind == TransitionKind::CrossTo2);
  CHECK(cross.q_next == 2);

  for (Trigger trig : {Trigger::AlphaZero, Trigger::GridNode}) {
    auto ex = classify_transition(vertical(-0.3, -0.8), 3, origin, u0, u0, trig);
    CHECK(ex.kind == TransitionKind::ExitSlidingTo1);
    CHECK(ex.q_next == 1);
  }
}

TEST_CASE("classify_transition: mirrored and degenerate branches") {
  // from mode 2 (h > 0 side) arriving downwards
  CHECK(classify_transition(vertical(1, -1), 2, origin, u0, u0, Trigger::Surface).kind ==
        TransitionKind::EnterSliding);
  CHECK(classify_transition(vertical(-2, -1), 2, origin, u0, u0, Trigger::Surface).kind == TransitionKind::CrossTo1);
  // grazing arrival
  CHECK(classify_transition(vertical(1e-12, -1), 1, origin, u0, u0, Trigger::Surface).kind ==
        TransitionKind::Degenerate);
  CHECK(classify_transition(vertical(1, 1e-12), 1, origin, u0, u0, Trigger::Surface).kind ==
        TransitionKind::Degenerate);
  // sliding at a grid node
  CHECK(classify_transition(vertical(1, -1), 3, origin, u0, u0, Trigger::GridNode).kind == TransitionKind::Stay);
  CHECK(classify_transition(vertical(1, 2), 3, origin, u0, u0, Trigger::GridNode).kind ==
        TransitionKind::ExitSlidingTo2);
  CHECK(classify_transition(vertical(-1, 1), 3, origin, u0, u0, Trigger::GridNode).kind ==
        TransitionKind::Degenerate);
  CHECK(classify_transition(vertical(2, 0.0), 3, origin, u0, u0, Trigger::AlphaOne).kind ==
        TransitionKind::ExitSlidingTo2);
  // smooth mode away from the surface at a grid node
  CHECK(classify_transition(vertical(1, -1), 1, vec({0, -1}), u0, u0, Trigger::GridNode).kind ==
        TransitionKind::Stay);
}

TEST_CASE("classify_transition: control jump at a node decides with the right control") {
  SystemText t;
  t.n = 2;
  t.m = 1;
  t.f1 = {"1", "u1"};
  t.f2 = {"1", "-1"};
  t.h = "x2";
  auto sys = make_system(t);
  Vec ul = vec({1.0}), ur = vec({-1.0});
  auto d = classify_transition(sys, 3, origin, ul, ur, Trigger::GridNode);
  CHECK(d.kind == TransitionKind::ExitSlidingTo1);
  auto e = classify_transition(sys, 3, origin, ur, ul, Trigger::GridNode);
  CHECK(e.kind == TransitionKind::Stay);
}

TEST_CASE("classify_transition: initial state") {
  CHECK(classify_transition(vertical(1, -1), 1, origin, u0, u0, Trigger::Initial).q_next == 3);
  CHECK(classify_transition(vertical(1, 1), 1, origin, u0, u0, Trigger::Initial).q_next == 2);
  CHECK(classify_transition(vertical(-1, -1), 1, origin, u0, u0, Trigger::Initial).q_next == 1);
  CHECK(classify_transition(vertical(-1, 1), 1, origin, u0, u0, Trigger::Initial).kind == TransitionKind::Degenerate);
  CHECK(classify_transition(vertical(1, -1), 1, vec({0, 0.5}), u0, u0, Trigger::Initial).q_next == 2);
  CHECK(classify_transition(vertical(1, -1), 1, vec({0, -0.5}), u0, u0, Trigger::Initial).q_next == 1);
}

TEST_CASE("property: random smooth systems") {
  // f_i = A_i sin(x) + B_i u + c_i with a curved surface h = x2 + 0.3 x1^2 - 0.1 x3
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  int on_segment_checks = 0;
  for (int trial = 0; trial < 50; ++trial) {
    SystemText t;
    t.n = 3;
    t.m = 2;
    for (int q = 0; q < 2; ++q) {
      auto& f = q == 0 ? t.f1 : t.f2;
      for (int i = 0; i < 3; ++i) {
        std::string e = std::to_string(U(rng));
        for (int k = 0; k < 3; ++k) e += " + " + std::to_string(U(rng)) + " * sin(x" + std::to_string(k + 1) + ")";
        for (int k = 0; k < 2; ++k) e += " + " + std::to_string(U(rng)) + " * u" + std::to_string(k + 1);
        e += " + 0.2 * x1 * u1";
        f.push_back(e);
      }
    }
    t.h = "x2 + 0.3 * x1^2 - 0.1 * x3";
    auto sys = make_system(t);
    Vec x = vec({U(rng), U(rng), U(rng)}), u = vec({U(rng), U(rng)});
    FilippovJet fj;
    try {
      fj = filippov_jet(sys, x, u);
    } catch (const Error&) {
      continue;
    }
    const Row& hx = fj.s.hx;
    // defining relation and tangency
    double rel = (hx * ((1 - fj.alpha) * fj.f1 + fj.alpha * fj.f2)).value();
    double scale = hx.norm() * (fj.f1.norm() + fj.f2.norm()) * std::max(1.0, std::abs(fj.alpha));
    CHECK(std::abs(rel) <= 1e-10 * scale);
    CHECK(std::abs((hx * fj.fF).value()) <= 1e-12 * std::max(1.0, hx.norm() * (fj.fF - fj.f1).norm()) * std::max(1.0, std::abs(fj.alpha)));
    if (fj.alpha >= 0 && fj.alpha <= 1) {
      // on the segment [f1, f2]: fF - f1 = alpha (f2 - f1)
      CHECK((fj.fF - fj.f1 - fj.alpha * (fj.f2 - fj.f1)).norm() <= 1e-12 * (1 + fj.f1.norm() + fj.f2.norm()));
      ++on_segment_checks;
    }
    // Jacobians against central differences
    const double step = 1e-6;
    for (int k = 0; k < 5; ++k) {
      Vec xp = x, xm = x, up = u, um = u;
      if (k < 3) {
        xp[k] += step;
        xm[k] -= step;
      } else {
        up[k - 3] += step;
        um[k - 3] -= step;
      }
      auto fp = filippov_field(sys, xp, up), fm = filippov_field(sys, xm, um);
      Vec dF = (fp.fF - fm.fF) / (2 * step);
      double da = (fp.alpha - fm.alpha) / (2 * step);
      Vec col = k < 3 ? Vec(fj.fFx.col(k)) : Vec(fj.fFu.col(k - 3));
      double acol = k < 3 ? fj.alpha_x[k] : fj.alpha_u[k - 3];
      double sc = std::max(1.0, col.norm());
      CHECK_MESSAGE((dF - col).norm() <= 1e-5 * sc * std::max(1.0, std::abs(fj.alpha) * std::abs(fj.alpha)), "trial ", trial, " k ", k);
      CHECK(std::abs(da - acol) <= 1e-5 * std::max(1.0, std::abs(acol) * std::max(1.0, std::abs(fj.alpha))));
    }
    // determinism
    auto d1 = classify_transition(sys, 3, x, u, u, Trigger::GridNode, 10.0);
    auto d2 = classify_transition(sys, 3, x, u, u, Trigger::GridNode, 10.0);
    CHECK(d1.kind == d2.kind);
    CHECK(d1.witness.hf1 == d2.witness.hf1);
  }
  CHECK(on_segment_checks > 5);
}
