#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "slidecraft/adjoint.hpp"
#include "slidecraft/sensitivity.hpp"
#include "support.hpp"

using namespace slidecraft;
using namespace slidecraft::testing;

namespace {

const FunctionalId kPhi{FunctionalKind::Phi, 0};

Row row(std::initializer_list<double> v) { return vec(v).transpose(); }

SimConfig fine() {
  SimConfig c;
  c.h_int = 1e-3;
  return c;
}

// A sliding Jacobian with chosen pieces; only the fields read by the jump
// solvers are filled.
ModeJacobian sliding_data(const Row& hx, const Vec& F, const Mat& G, const Mat& H) {
  ModeJacobian J;
  J.q = 3;
  J.hx = hx;
  J.F = F;
  J.G = G;
  J.H = H;
  J.nrm = hx.squaredNorm();
  return J;
}

struct Case {
  const char* name;
  HybridSystem sys;
  ControlGrid u;
};

std::vector<Case> problems(Basis b) {
  std::vector<Case> out;
  {
    HybridSystem s = relay2d();
    out.push_back({"relay2d", s, random_grid(s, 20, 0.3, 21, b)});
  }
  {
    HybridSystem s = crossing2d();
    out.push_back({"crossing2d", s, random_grid(s, 20, 0.3, 22, b)});
  }
  {
    HybridSystem s = exit2d();
    ControlGrid u = random_grid(s, 10, 0.1, 23, b);
    u.values.array() += 0.5;
    out.push_back({"exit2d", s, u});
    // a custom guard fires after α has turned negative, so the field jumps
    s.eta_exit = parse_expression("0.05 + 2*u1 - x1", 2, 1);
    out.push_back({"exit2d_eta", s, u});
  }
  return out;
}

}  // namespace

TEST_CASE("terminal conditions") {
  CHECK(terminal_conditions_smooth(row({1, 0})) == vec({-1, 0}));
  CHECK(terminal_conditions_smooth(row({0, 0})) == vec({0, 0}));
  CHECK(terminal_conditions_smooth(row({2, -3})) == vec({-2, 3}));

  ModeJacobian J = sliding_data(row({0, 1}), vec({1, 0}), Mat::Zero(2, 2), Mat::Zero(2, 2));
  SlidingTerminal a = terminal_conditions_sliding(J, row({1, 1}), 1e-12);
  CHECK(a.nu == 1.0);
  CHECK(a.lambda == vec({-1, 0}));
  // residuals of ν h_xᵀ = F_xᵀ + λ, h_x λ = 0, and the hidden row
  CHECK((a.nu * J.hx.transpose() - (vec({1, 1}) + a.lambda)).norm() <= 1e-10);
  CHECK(std::abs((J.hx * a.lambda).value()) <= 1e-10);
  CHECK(std::abs(a.lambda_h) <= 1e-10);

  SlidingTerminal b = terminal_conditions_sliding(J, row({0, 2}), 1e-12);
  CHECK(b.nu == 2.0);
  CHECK(b.lambda.norm() == 0.0);
  SlidingTerminal c = terminal_conditions_sliding(J, row({3, 0}), 1e-12);
  CHECK(c.nu == 0.0);
  CHECK(c.lambda == vec({-3, 0}));

  ModeJacobian flat = sliding_data(row({0, 0}), vec({1, 0}), Mat::Zero(2, 2), Mat::Zero(2, 2));
  CHECK(error_code([&] { terminal_conditions_sliding(flat, row({1, 1}), 1e-12); }) ==
        Errc::SurfaceNormalVanishes);

  // curved surface with state-dependent fields: hidden row holds
  HybridSystem sys = relay2d();
  Vec x = vec({0.4, -0.1 * std::sin(0.4)});
  ModeJacobian Jc = mode_jacobian(sys, 3, x, vec({0.2}));
  SlidingTerminal d = terminal_conditions_sliding(Jc, row({0.7, -0.3}), 1e-12);
  double hidden = (Jc.F.transpose() * Jc.H * d.lambda).value() - (Jc.hx * Jc.G.transpose() * d.lambda).value() +
                  Jc.nrm * d.lambda_h;
  CHECK(std::abs(hidden) <= 1e-10);
  CHECK(std::abs((Jc.hx * d.lambda).value()) <= 1e-10);
}

TEST_CASE("smooth adjoint segments") {
  SUBCASE("zero Jacobian keeps λ constant") {
    SystemText t;
    t.f1 = {"u1"};
    t.h = "x1 - 100";
    HybridSystem sys = make_system(t);
    ControlGrid u = constant_control(sys, 5, 0.4);
    HybridTrajectory tr = simulate(sys, u, fine());
    std::vector<Vec> L;
    std::vector<double> Lh;
    integrate_adjoint_segment(sys, tr.segments[0], u, vec({-1.5}), L, Lh);
    for (const auto& l : L) CHECK(l[0] == -1.5);
  }
  SUBCASE("linear scalar field: λ(t) = λ(tf) e^{a (tf − t)}") {
    SystemText t;
    t.f1 = {"-0.7*x1 + u1"};
    t.h = "x1 - 100";
    t.x0 = {1.0};
    HybridSystem sys = make_system(t);
    ControlGrid u = constant_control(sys, 5, 0.4);
    HybridTrajectory tr = simulate(sys, u, fine());
    std::vector<Vec> L;
    std::vector<double> Lh;
    integrate_adjoint_segment(sys, tr.segments[0], u, vec({2.0}), L, Lh);
    const auto& steps = tr.segments[0].steps;
    for (std::size_t i = 0; i < steps.size(); ++i)
      CHECK(std::abs(L[i][0] - 2.0 * std::exp(-0.7 * (1.0 - steps[i].ta))) <= 1e-8);
  }
  SUBCASE("λᵀy is constant along a linear system without input") {
    SystemText t;
    t.n = 2;
    t.f1 = {"x2", "-x1 - 0.3*x2 + u1"};
    t.h = "x1 - 100";
    t.phi = "x1 + 2*x2";
    t.x0 = {1.0, 0.0};
    HybridSystem sys = make_system(t);
    ControlGrid u = constant_control(sys, 4, 0.0);
    ControlGrid d = constant_control(sys, 4, 0.0);
    d.values(0, 0) = 1.0;  // only the first interval
    HybridTrajectory tr = simulate(sys, u, fine());
    VariationPath v = linearize_forward(sys, tr, u, d);
    AdjointPath p = adjoint_pass(sys, tr, u, kPhi);
    const auto& steps = tr.segments[0].steps;
    double ref = p.lambda[0].back().dot(v.nodes[0].back());
    for (std::size_t i = 0; i < steps.size(); ++i)
      if (steps[i].ta >= 0.25) CHECK(std::abs(p.lambda[0][i].dot(v.nodes[0][i]) - ref) <= 1e-10);
  }
}

TEST_CASE("sliding adjoint segment of the relay demo") {
  HybridSystem sys = relay_demo();
  ControlGrid u = constant_control(sys, 4, 0.0);
  HybridTrajectory tr = simulate(sys, u, fine());
  REQUIRE(tr.segments.size() == 2);
  REQUIRE(tr.segments[1].q == 3);
  std::vector<Vec> L;
  std::vector<double> Lh;
  integrate_adjoint_segment(sys, tr.segments[1], u, vec({-1, 0}), L, Lh);
  for (std::size_t i = 0; i < L.size(); ++i) {
    CHECK((L[i] - vec({-1, 0})).norm() <= 1e-15);
    CHECK(Lh[i] == 0.0);
  }
  integrate_adjoint_segment(sys, tr.segments[1], u, vec({0, 0}), L, Lh);
  for (std::size_t i = 0; i < L.size(); ++i) {
    CHECK(L[i].norm() == 0.0);
    CHECK(Lh[i] == 0.0);
  }
  // curved surface: the constraint holds at every node
  HybridSystem r = relay2d();
  ControlGrid ur = random_grid(r, 20, 0.3, 31);
  HybridTrajectory trr = simulate(r, ur, fine());
  AdjointPath p = adjoint_pass(r, trr, ur, kPhi);
  int nodes = 0;
  for (std::size_t k = 0; k < trr.segments.size(); ++k) {
    const Segment& seg = trr.segments[k];
    if (seg.q != 3) continue;
    for (std::size_t i = 0; i < seg.steps.size(); ++i, ++nodes)
      CHECK(std::abs((surface_jet(r, seg.steps[i].xa).hx * p.lambda[k][i]).value()) <= 1e-9);
  }
  CHECK(nodes > 500);
}

TEST_CASE("jump into sliding") {
  Vec f1 = vec({1, 1}), fF = vec({1, 0});
  Row hx = row({0, 1});
  JumpResult a = jump_smooth_to_sliding(vec({-1, 0}), 0.0, f1, fF, hx, 0.0, 1e-9);
  CHECK(a.pi == 0.0);
  CHECK(a.lambda_minus == vec({-1, 0}));
  JumpResult b = jump_smooth_to_sliding(vec({-1, 2}), 0.0, f1, fF, hx, 0.0, 1e-9);
  CHECK(b.pi == 2.0);
  CHECK(b.lambda_minus == vec({-1, 0}));
  CHECK(b.lambda_minus.dot(f1) == -1.0);
  CHECK(vec({-1, 2}).dot(fF) == -1.0);
  CHECK(b.residual <= 1e-10);
  JumpResult c = jump_smooth_to_sliding(vec({0, 0}), 0.0, f1, fF, hx, 0.0, 1e-9);
  CHECK(c.pi == 0.0);
  CHECK(c.lambda_minus.norm() == 0.0);
  CHECK(error_code([&] { jump_smooth_to_sliding(vec({1, 1}), 0.0, vec({1, 1e-12}), fF, hx, 0.0, 1e-9); }) ==
        Errc::GrazingSwitch);
}

TEST_CASE("jump out of sliding") {
  std::mt19937 rng(5);
  std::normal_distribution<double> N01;
  auto rnd = [&](int r, int c) {
    Mat M(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) M(i, j) = N01(rng);
    return M;
  };
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + trial % 3;
    Row hx = rnd(1, n);
    Vec F = rnd(n, 1);
    F = tangent_projection(hx, F);
    Mat H = rnd(n, n);
    H = 0.5 * (H + H.transpose());
    ExitData e;
    e.J = sliding_data(hx, F, rnd(n, n), H);
    e.f_plus = rnd(n, 1);
    e.eta_x = rnd(1, n);
    e.eta_u = trial % 2 ? Row(rnd(1, 1)) : Row();
    e.u_prime = trial % 2 ? Vec(rnd(1, 1)) : Vec();
    e.h_minus = 1e-11 * N01(rng);
    Vec lp = rnd(n, 1);
    JumpResult lu = jump_sliding_to_smooth(e, lp);
    CHECK(lu.residual <= 1e-9);
    CHECK(std::abs((hx * lu.lambda_minus).value()) <= 1e-9);
    JumpResult cf = jump_sliding_to_smooth_closed(e, lp);
    CHECK((lu.lambda_minus - cf.lambda_minus).norm() <= 1e-8 * std::max(1.0, lu.lambda_minus.norm()));
    CHECK(std::abs(lu.pi - cf.pi) <= 1e-8 * std::max(1.0, std::abs(lu.pi)));
    CHECK(std::abs(lu.nu_t - cf.nu_t) <= 1e-8 * std::max(1.0, std::abs(lu.nu_t)));

    JumpResult z = jump_sliding_to_smooth(e, Vec::Zero(n));
    CHECK(z.lambda_minus.norm() == 0.0);
    CHECK(z.pi == 0.0);
    CHECK(z.nu_t == 0.0);
    CHECK(z.lambda_h_minus == 0.0);
  }

  // mirror of the entry jump: leaving x2 = 0 into f1 = (1, 1) with η = α
  // independent of u, so π comes from the Hamiltonian balance alone
  ExitData e;
  e.J = sliding_data(row({0, 1}), vec({1, 0}), Mat::Zero(2, 2), Mat::Zero(2, 2));
  e.f_plus = vec({1, -1});
  e.eta_x = row({0.5, 0.25});
  JumpResult m = jump_sliding_to_smooth(e, vec({-1, 2}));
  // λ⁻·f_F = λ⁺·f⁺ gives π = (−1 − (−3)) / 0.5
  CHECK(m.pi == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(m.lambda_minus[1] == doctest::Approx(0.0).scale(1.0).epsilon(1e-14));
  CHECK(m.lambda_minus[0] == doctest::Approx(-3.0).epsilon(1e-14));

  // rank deficiency: η_x f_F + η_u u′ = 0
  ExitData s = e;
  s.eta_x = row({0.0, 0.25});
  CHECK(error_code([&] { jump_sliding_to_smooth(s, vec({-1, 2})); }) == Errc::SingularJumpSystem);
}

TEST_CASE("gradient of a pure integrator") {
  SystemText t;
  t.f1 = {"u1"};
  t.h = "x1 - 100";
  t.phi = "x1";
  HybridSystem sys = make_system(t);
  for (Basis b : {Basis::PiecewiseConstant, Basis::PiecewiseLinear}) {
    ControlGrid u = constant_control(sys, 4, 0.2, b);
    HybridTrajectory tr = simulate(sys, u, fine());
    AdjointPath p = adjoint_pass(sys, tr, u, kPhi);
    for (const auto& l : p.lambda[0]) CHECK(l[0] == -1.0);
    Mat g = gradient(sys, tr, u, p);
    if (b == Basis::PiecewiseConstant) {
      for (int j = 0; j < 4; ++j) CHECK(g(0, j) == doctest::Approx(0.25).epsilon(1e-14));
    } else {
      CHECK(g(0, 0) == doctest::Approx(0.125).epsilon(1e-14));
      for (int j = 1; j < 4; ++j) CHECK(g(0, j) == doctest::Approx(0.25).epsilon(1e-14));
      CHECK(g(0, 4) == doctest::Approx(0.125).epsilon(1e-14));
    }
  }
  // λ ≡ 0 gives a zero gradient
  ControlGrid u = constant_control(sys, 4, 0.2);
  HybridTrajectory tr = simulate(sys, u, fine());
  AdjointPath p = adjoint_pass(sys, tr, u, Row::Zero(1));
  CHECK(gradient(sys, tr, u, p).norm() == 0.0);
  AdjointPath broken = p;
  broken.lambda.clear();
  CHECK(error_code([&] { gradient(sys, tr, u, broken); }) == Errc::IncompletePath);
}

TEST_CASE("relay demo: gradient matches central differences") {
  HybridSystem sys = relay_demo();
  ControlGrid u = constant_control(sys, 4, 0.0);
  ControlGrid d = random_grid(sys, 4, 1.0, 3);
  HybridTrajectory tr = simulate(sys, u, fine());
  Mat g = gradient(sys, tr, u, adjoint_pass(sys, tr, u, kPhi));
  double fd = fd_directional_derivative(sys, u, d, kPhi, {1e-5}, fine())[0].value;
  CHECK(std::abs(pair(g, d) - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
}

TEST_CASE("property: adjoint, forward and central differences agree") {
  for (Basis b : {Basis::PiecewiseConstant, Basis::PiecewiseLinear}) {
    for (Case& c : problems(b)) {
      CAPTURE(c.name);
      CAPTURE(basis_name(b));
      HybridTrajectory tr = simulate(c.sys, c.u, fine());
      REQUIRE(tr.switches.size() >= 1);
      if (std::string(c.name) == "exit2d") CHECK(tr.switches[0].trigger == Trigger::AlphaZero);
      if (std::string(c.name) == "exit2d_eta") {
        CHECK(tr.switches[0].trigger == Trigger::ExitGuard);
        AdjointPath p = adjoint_pass(c.sys, tr, c.u, kPhi);
        CHECK(std::abs(p.jumps[0].r.pi) > 1e-3);
      }
      if (std::string(c.name) == "crossing2d") CHECK(tr.switches[0].kind == TransitionKind::CrossTo2);
      Mat g = gradient(c.sys, tr, c.u, adjoint_pass(c.sys, tr, c.u, kPhi));
      for (unsigned seed = 0; seed < 20; ++seed) {
        ControlGrid d = random_grid(c.sys, c.u.N, 1.0, 1000 + seed, b);
        double adj = pair(g, d);
        double fwd = directional_value(c.sys, tr, linearize_forward(c.sys, tr, c.u, d), kPhi);
        CHECK(std::abs(adj - fwd) <= 1e-8 * std::max(1.0, std::abs(fwd)));
        if (seed < 5) {
          double fd = fd_directional_derivative(c.sys, c.u, d, kPhi, {1e-5}, fine())[0].value;
          CHECK(std::abs(adj - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
        }
      }
    }
  }
}

TEST_CASE("property: Hamiltonian continuity and costate regularity") {
  for (Case& c : problems(Basis::PiecewiseConstant)) {
    CAPTURE(c.name);
    HybridTrajectory tr = simulate(c.sys, c.u, fine());
    AdjointPath p = adjoint_pass(c.sys, tr, c.u, kPhi);
    REQUIRE(p.jumps.size() == tr.switches.size());
    for (std::size_t k = 0; k < tr.switches.size(); ++k) {
      const SwitchRecord& sw = tr.switches[k];
      const AdjointJump& jp = p.jumps[k];
      if (sw.trigger == Trigger::GridNode) continue;
      CHECK((p.lambda[k].back() - jp.r.lambda_minus).norm() == 0.0);
      CHECK((p.lambda[k + 1].front() - jp.lambda_plus).norm() == 0.0);
      Vec fm = mode_rhs(c.sys, sw.q_from, sw.x, c.u.at(sw.interval_left, sw.t));
      Vec fp = mode_rhs(c.sys, sw.q_to, sw.x, c.u.at(sw.interval_right, sw.t));
      double eta_term = 0.0;
      if (jp.point.size() > 0) eta_term = (jp.point * c.u.slope(sw.interval_left)).value();
      double ham = jp.r.lambda_minus.dot(fm) - eta_term - jp.lambda_plus.dot(fp);
      CHECK(std::abs(ham) <= 1e-8);
    }
    // consecutive nodes inside a segment move by O(h)
    for (std::size_t k = 0; k < tr.segments.size(); ++k)
      for (std::size_t i = 0; i + 1 < p.lambda[k].size(); ++i)
        CHECK((p.lambda[k][i + 1] - p.lambda[k][i]).norm() <= 50 * fine().h_int);
  }
}

TEST_CASE("costate and jump exports") {
  HybridSystem sys = relay_demo();
  ControlGrid u = constant_control(sys, 4, 0.0);
  HybridTrajectory tr = simulate(sys, u, fine());
  AdjointPath p = adjoint_pass(sys, tr, u, kPhi);
  std::string c = costate_csv(sys, tr, p, 100);
  CHECK(c.rfind("t,q,lambda1,lambda2,lambda_h\n", 0) == 0);
  CHECK(c.find("\n2,3,-1,0,0\n") != std::string::npos);
  std::string j = jumps_csv(p);
  CHECK(j == "t_t,pi,nu_t\n1,0,0\n");
}
