#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "slidecraft/sim.hpp"
#include "support.hpp"

using namespace slidecraft;
using namespace slidecraft::testing;

namespace {

void check_tiling(const HybridSystem& sys, const HybridTrajectory& tr) {
  REQUIRE(!tr.segments.empty());
  CHECK(tr.segments.size() == tr.switches.size() + 1);
  CHECK(tr.segments.front().t_start == sys.t0);
  CHECK(tr.segments.back().t_end == sys.tf);
  for (std::size_t k = 0; k + 1 < tr.segments.size(); ++k) {
    CHECK(tr.segments[k].t_end == tr.segments[k + 1].t_start);
    CHECK(tr.segments[k].t_end == tr.switches[k].t);
  }
  for (std::size_t k = 0; k < tr.segments.size(); ++k) {
    const auto& seg = tr.segments[k];
    double t = seg.t_start;
    for (const auto& s : seg.steps) {
      CHECK(s.ta == t);
      CHECK(s.tb >= s.ta);
      CHECK(s.q == seg.q);
      t = s.tb;
    }
    if (!seg.steps.empty()) CHECK(std::abs(t - seg.t_end) <= 1e-13);
    // continuity across the switch that ends this segment
    if (k < tr.switches.size() && !seg.steps.empty()) {
      CHECK((seg.steps.back().xb - tr.switches[k].x).norm() <= 1e-10);
      const auto& next = tr.segments[k + 1];
      if (!next.steps.empty()) CHECK((next.steps.front().xa - tr.switches[k].x).norm() <= 1e-10);
    }
  }
}

SimConfig fine() {
  SimConfig c;
  c.h_int = 1e-3;
  return c;
}

}  // namespace

TEST_CASE("smooth segment: event on a linear flow") {
  auto sys = relay_demo();
  auto u = constant_control(sys, 1, 0.0);
  bool armed = true;
  auto w = integrate_smooth_segment(sys, 1, vec({0, -1}), 0.0, 2.0, u, 0, fine(), armed);
  REQUIRE(w.event);
  CHECK(*w.event == Trigger::Surface);
  CHECK(w.steps.back().tb == doctest::Approx(1.0).epsilon(1e-14));
  CHECK((w.steps.back().xb - vec({1, 0})).norm() <= 1e-14);
}

TEST_CASE("smooth segment: stationary flow") {
  SystemText t;
  t.n = 2;
  t.f1 = {"0", "0"};
  t.h = "x2";
  auto sys = make_system(t);
  auto u = constant_control(sys, 1, 0.0);
  bool armed = true;
  auto w = integrate_smooth_segment(sys, 1, vec({0.5, -1}), 0.0, 1.0, u, 0, fine(), armed);
  CHECK(!w.event);
  CHECK(w.steps.size() == 1000);
  CHECK(w.steps.back().xb == vec({0.5, -1}));
  CHECK(w.steps.back().tb == 1.0);
}

TEST_CASE("smooth segment: leaving the surface does not re-fire") {
  SystemText t;
  t.n = 2;
  t.f1 = {"1", "1"};
  t.f2 = {"1", "1"};
  t.h = "x2";
  auto sys = make_system(t);
  auto u = constant_control(sys, 1, 0.0);
  bool armed = false;
  // mode 2 starting on h = 0 and moving up
  auto w = integrate_smooth_segment(sys, 2, vec({0, 0}), 0.0, 1.0, u, 0, fine(), armed);
  CHECK(!w.event);
  CHECK(armed);
  CHECK(error_code([&] { integrate_smooth_segment(sys, 2, vec({0, 0}), 0.0, 1e-15, u, 0, fine(), armed); }) ==
        Errc::StepSizeError);
}

TEST_CASE("smooth segment: non-finite state") {
  SystemText t;
  t.n = 1;
  t.f1 = {"exp(x1) * exp(x1)"};
  t.h = "x1 - 1e300";
  t.x0 = {700.0};
  auto sys = make_system(t);
  auto u = constant_control(sys, 1, 0.0);
  bool armed = true;
  CHECK(error_code([&] { integrate_smooth_segment(sys, 1, sys.x0, 0.0, 1.0, u, 0, fine(), armed); }) ==
        Errc::NonFiniteState);
}

TEST_CASE("sliding segment: closed form x = (t, 0)") {
  auto sys = relay_demo();
  auto u = constant_control(sys, 1, 0.0);
  auto w = integrate_sliding_segment(sys, vec({1, 0}), 1.0, 2.0, u, 0, fine());
  CHECK(!w.event);
  for (const auto& s : w.steps) {
    CHECK(std::abs(s.xb[0] - s.tb) <= 1e-12);
    CHECK(s.xb[1] == 0.0);
    CHECK(std::abs(s.zb) <= 1e-9);
  }
  CHECK(w.steps.back().tb == 2.0);
}

TEST_CASE("sliding segment: exit at the root of alpha") {
  // α = u / (u + 1) with u = 1 - t vanishes at t = 1
  SystemText t;
  t.n = 2;
  t.f1 = {"1", "u1"};
  t.f2 = {"1", "-1"};
  t.h = "x2";
  t.tf = 2.0;
  auto sys = make_system(t);
  ControlGrid u(1, Basis::PiecewiseLinear, 0.0, 2.0, 1);
  u.values << 1.0, -1.0;
  auto w = integrate_sliding_segment(sys, vec({0, 0}), 0.0, 2.0, u, 0, fine());
  REQUIRE(w.event);
  CHECK(*w.event == Trigger::AlphaZero);
  CHECK(std::abs(w.steps.back().tb - 1.0) <= 1e-12);
  CHECK((w.steps.back().xb - vec({1, 0})).norm() <= 1e-12);

  // the full simulation then continues in mode 1 with x2' = 1 - t < 0
  sys.x0 = vec({0, 0});
  auto tr = simulate(sys, u, fine());
  REQUIRE(tr.switches.size() == 1);
  CHECK(tr.switches[0].kind == TransitionKind::ExitSlidingTo1);
  CHECK(tr.switches[0].trigger == Trigger::AlphaZero);
  CHECK(tr.qf == 1);
  // x2(2) = ∫_1^2 (1 - t) dt = -1/2
  CHECK(std::abs(tr.xf[1] + 0.5) <= 1e-12);
  check_tiling(sys, tr);
}

TEST_CASE("simulate: relay demo") {
  auto sys = relay_demo();
  auto u = constant_control(sys, 4, 0.0);
  auto tr = simulate(sys, u, fine());
  REQUIRE(tr.segments.size() == 2);
  CHECK(tr.segments[0].q == 1);
  CHECK(tr.segments[1].q == 3);
  REQUIRE(tr.switches.size() == 1);
  CHECK(std::abs(tr.switches[0].t - 1.0) <= 1e-13);
  CHECK(tr.switches[0].kind == TransitionKind::EnterSliding);
  CHECK((tr.xf - vec({2, 0})).norm() <= 1e-12);
  auto st = sliding_stats(sys, tr);
  CHECK(st.max_h <= 1e-9);
  CHECK(st.max_z <= 1e-9);
  check_tiling(sys, tr);
}

TEST_CASE("simulate: no crossing and crossing") {
  SystemText t;
  t.n = 2;
  t.f1 = {"1", "0.1"};
  t.f2 = {"1", "1"};
  t.h = "x2";
  t.x0 = {0, -1};
  t.tf = 2.0;
  auto sys = make_system(t);
  auto u = constant_control(sys, 2, 0.0);
  auto tr = simulate(sys, u, fine());
  CHECK(tr.segments.size() == 1);
  CHECK(tr.switches.empty());
  check_tiling(sys, tr);

  t.f1 = {"1", "1"};
  auto sys2 = make_system(t);
  auto tr2 = simulate(sys2, u, fine());
  REQUIRE(tr2.switches.size() == 1);
  CHECK(tr2.switches[0].kind == TransitionKind::CrossTo2);
  CHECK(tr2.segments[1].q == 2);
  CHECK((tr2.xf - vec({2, 1})).norm() <= 1e-12);
  check_tiling(sys2, tr2);
}

TEST_CASE("simulate: control jump at a grid node ends sliding") {
  SystemText t;
  t.n = 2;
  t.f1 = {"1", "u1"};
  t.f2 = {"1", "-1"};
  t.h = "x2";
  t.x0 = {0, 0};
  t.tf = 2.0;
  auto sys = make_system(t);
  ControlGrid u(2, Basis::PiecewiseConstant, 0.0, 2.0, 1);
  u.values << 1.0, -1.0;
  auto tr = simulate(sys, u, fine());
  REQUIRE(tr.switches.size() == 1);
  CHECK(tr.switches[0].trigger == Trigger::GridNode);
  CHECK(tr.switches[0].t == 1.0);
  CHECK(tr.switches[0].interval_left == 0);
  CHECK(tr.switches[0].interval_right == 1);
  CHECK(std::abs(tr.xf[1] + 1.0) <= 1e-12);
  check_tiling(sys, tr);
}

TEST_CASE("simulate: switch budget") {
  // sliding is impossible, the flow crosses back and forth at each node
  SystemText t;
  t.n = 2;
  t.f1 = {"1", "u1"};
  t.f2 = {"1", "u1"};
  t.h = "x2";
  t.x0 = {0, -0.05};
  auto sys = make_system(t);
  ControlGrid u(10, Basis::PiecewiseConstant, 0.0, 1.0, 1);
  for (int k = 0; k < 10; ++k) u.values(0, k) = k % 2 ? -1.0 : 1.0;
  SimConfig cfg = fine();
  cfg.max_switches = 3;
  CHECK(error_code([&] { simulate(sys, u, cfg); }) == Errc::SwitchBudgetExceeded);
  cfg.max_switches = 64;
  cfg.min_switch_gap = 0.2;
  auto tr = simulate(sys, u, cfg);
  CHECK(tr.switches.size() == 10);
  CHECK(!tr.warnings.empty());
}

TEST_CASE("simulate: degenerate and inconsistent starts") {
  SystemText t;
  t.n = 2;
  t.f1 = {"1", "-1"};
  t.f2 = {"1", "1"};  // repelling surface
  t.h = "x2";
  t.x0 = {0, 0};
  auto sys = make_system(t);
  auto u = constant_control(sys, 1, 0.0);
  CHECK(error_code([&] { simulate(sys, u, fine()); }) == Errc::DegenerateTransition);
}

TEST_CASE("property: curved surface stays invariant, trajectories tile and are deterministic") {
  // circular surface h = x1^2 + x2^2 - 1, f1 points outward, f2 inward plus
  // a rotation, so the flow slides around the circle
  SystemText t;
  t.n = 2;
  t.m = 1;
  t.f1 = {"x1 - x2 * (1 + u1)", "x2 + x1 * (1 + u1)"};
  t.f2 = {"-x1 - x2", "-x2 + x1"};
  t.h = "x1^2 + x2^2 - 1";
  t.x0 = {0.5, 0.0};
  t.tf = 3.0;
  auto sys = make_system(t);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(-0.5, 0.5);
  for (int trial = 0; trial < 10; ++trial) {
    ControlGrid u(6, Basis::PiecewiseConstant, 0.0, 3.0, 1);
    for (int k = 0; k < 6; ++k) u.values(0, k) = U(rng);
    auto tr = simulate(sys, u, fine());
    check_tiling(sys, tr);
    REQUIRE(tr.switches.size() >= 1);
    CHECK(tr.qf == 3);
    auto st = sliding_stats(sys, tr);
    CHECK(st.max_h <= 1e-9);
    CHECK(st.max_z <= 1e-9);
    // event bracket: the entry point lies on the surface
    CHECK(std::abs(surface(sys, tr.switches[0].x)) <= 1e-9);
    auto again = simulate(sys, u, fine());
    CHECK(again.xf == tr.xf);
    CHECK(trajectory_csv(sys, again, u) == trajectory_csv(sys, tr, u));
  }
}

TEST_CASE("csv export") {
  auto sys = relay_demo();
  auto u = constant_control(sys, 2, 0.0);
  SimConfig cfg;
  cfg.h_int = 0.25;
  auto tr = simulate(sys, u, cfg);
  std::string csv = trajectory_csv(sys, tr, u);
  CHECK(csv.rfind("t,q,x1,x2,z,u1\n0,1,0,-1,0,0\n", 0) == 0);
  std::string sw = switches_csv(sys, tr);
  CHECK(sw.find("t_t,q_from,q_to,x1,x2,kind,trigger\n") == 0);
  CHECK(sw.find(",1,3,") != std::string::npos);
  CHECK(sw.find("enter_sliding,surface") != std::string::npos);
}
