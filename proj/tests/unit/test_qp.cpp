#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "slidecraft/qp.hpp"
#include "support.hpp"

using namespace slidecraft;
using namespace slidecraft::testing;

namespace {

DirectionProblem scalar(double g, double lo = -1.0, double hi = 1.0) {
  DirectionProblem p;
  p.g = vec({g});
  p.lo = vec({lo});
  p.hi = vec({hi});
  p.w = vec({1.0});
  return p;
}

// Smallest objective over a grid of d with the optimal β for each d.
double grid_search(const DirectionProblem& p, double res) {
  const int K = static_cast<int>(p.g.size());
  std::vector<int> steps(K);
  for (int k = 0; k < K; ++k) steps[k] = static_cast<int>(std::round((p.hi[k] - p.lo[k]) / res));
  std::vector<int> idx(K, 0);
  double best = INFINITY;
  const double M = constraint_violation_M(p.g1, p.g2);
  while (true) {
    Vec d(K);
    for (int k = 0; k < K; ++k) d[k] = p.lo[k] + idx[k] * (p.hi[k] - p.lo[k]) / steps[k];
    double beta = 0.0;
    for (std::size_t i = 0; i < p.g1.size(); ++i)
      beta = std::max(beta, std::abs(p.g1[i] + (p.w.array() * p.grad_g1[i].array() * d.array()).sum()));
    for (std::size_t j = 0; j < p.g2.size(); ++j)
      beta = std::max(beta, p.g2[j] + (p.w.array() * p.grad_g2[j].array() * d.array()).sum());
    if (beta <= 2 * M + 1) best = std::min(best, direction_objective(p, d, beta));
    int k = 0;
    while (k < K && ++idx[k] > steps[k]) idx[k++] = 0;
    if (k == K) break;
  }
  return best;
}

DirectionProblem random_problem(std::mt19937& rng, int K, int ne, int ni) {
  std::normal_distribution<double> N01;
  std::uniform_real_distribution<double> U(0.1, 1.0);
  auto rv = [&] {
    Vec v(K);
    for (int k = 0; k < K; ++k) v[k] = N01(rng);
    return v;
  };
  DirectionProblem p;
  p.g = rv();
  p.w = Vec(K);
  for (int k = 0; k < K; ++k) p.w[k] = U(rng);
  p.lo = -Vec::NullaryExpr(K, [&](Eigen::Index) { return U(rng); });
  p.hi = Vec::NullaryExpr(K, [&](Eigen::Index) { return U(rng); });
  for (int i = 0; i < ne; ++i) {
    p.grad_g1.push_back(rv());
    p.g1.push_back(0.5 * N01(rng));
  }
  for (int j = 0; j < ni; ++j) {
    p.grad_g2.push_back(rv());
    p.g2.push_back(0.5 * N01(rng));
  }
  p.c = 0.5 + 5.0 * U(rng);
  return p;
}

// Direct substitution into the KKT system of the subproblem.
double kkt_defect(const DirectionProblem& p, const DirectionSolution& s) {
  const int K = static_cast<int>(p.g.size());
  Vec v = p.g + s.d;
  double msum = 0.0, defect = 0.0;
  for (std::size_t i = 0; i < p.g1.size(); ++i) {
    v += s.alpha_eq[i] * p.grad_g1[i];
    msum += s.mu_eq_plus[i] + s.mu_eq_minus[i];
    double r = p.g1[i] + (p.w.array() * p.grad_g1[i].array() * s.d.array()).sum();
    defect = std::max({defect, std::abs(r) - s.beta, s.mu_eq_plus[i] * (s.beta - r),
                       s.mu_eq_minus[i] * (s.beta + r), -s.mu_eq_plus[i], -s.mu_eq_minus[i]});
  }
  for (std::size_t j = 0; j < p.g2.size(); ++j) {
    v += s.mu_in[j] * p.grad_g2[j];
    msum += s.mu_in[j];
    double r = p.g2[j] + (p.w.array() * p.grad_g2[j].array() * s.d.array()).sum();
    defect = std::max({defect, r - s.beta, s.mu_in[j] * (s.beta - r), -s.mu_in[j]});
  }
  if (p.beta_nonneg) defect = std::max({defect, -s.beta, std::abs(p.c - msum - s.nu_beta), s.nu_beta * s.beta});
  else
    defect = std::max(defect, std::abs(p.c - msum));
  // stationarity in d with the box: v ≥ 0 at the lower bound, ≤ 0 at the upper, 0 inside
  for (int k = 0; k < K; ++k) {
    const double d = s.d[k];
    if (d <= p.lo[k]) defect = std::max(defect, -v[k]);
    else if (d >= p.hi[k]) defect = std::max(defect, v[k]);
    else defect = std::max(defect, std::abs(v[k]));
    defect = std::max({defect, p.lo[k] - d, d - p.hi[k]});
  }
  return defect;
}

}  // namespace

TEST_CASE("constraint violation") {
  CHECK(constraint_violation_M({0.3}, {-0.2}) == 0.3);
  CHECK(constraint_violation_M({}, {}) == 0.0);
  CHECK(constraint_violation_M({-0.4}, {0.1}) == 0.4);
}

TEST_CASE("unconstrained scalar directions") {
  for (double w : {1.0, 0.25}) {
    DirectionProblem p = scalar(2.0);
    p.w[0] = w;
    DirectionSolution s = solve_direction(p);
    CHECK(s.d[0] == -1.0);
    CHECK(s.beta == 0.0);
    CHECK(s.box_dual[0] == doctest::Approx(-1.0));
  }
  DirectionSolution s = solve_direction(scalar(0.5));
  CHECK(s.d[0] == -0.5);
  CHECK(s.beta == 0.0);
  CHECK(s.box_dual[0] == 0.0);
}

TEST_CASE("one inequality against a brute-force search") {
  DirectionProblem p = scalar(0.0);
  p.g2 = {0.2};
  p.grad_g2 = {vec({1.0})};
  p.c = 10.0;
  DirectionSolution s = solve_direction(p);
  // by hand: d = −0.2 makes the row vanish, cost ½·0.04 = 0.02 < c·β·…
  CHECK(s.d[0] == doctest::Approx(-0.2).epsilon(1e-8));
  CHECK(std::abs(s.beta) <= 1e-9);
  CHECK(std::abs(s.objective - grid_search(p, 1e-4)) <= 1e-3);
  CHECK(s.objective <= grid_search(p, 1e-4) + 1e-12);
}

TEST_CASE("input errors") {
  DirectionProblem p = scalar(1.0, 0.1, 1.0);
  CHECK(error_code([&] { solve_direction(p); }) == Errc::InfeasibleBox);
  DirectionProblem f = scalar(1.0);
  f.beta_nonneg = false;
  CHECK(error_code([&] { solve_direction(f); }) == Errc::Unbounded);
  DirectionProblem c = scalar(1.0);
  c.c = 0.0;
  CHECK(error_code([&] { solve_direction(c); }) == Errc::InputError);
}

TEST_CASE("budget exhaustion keeps the best iterate") {
  std::mt19937 rng(1);
  DirectionProblem p = random_problem(rng, 6, 1, 2);
  QpOptions o;
  o.max_iter = 1;
  o.tol_kkt = 1e-300;
  try {
    solve_direction(p, o);
    FAIL("expected QpNotConverged");
  } catch (const QpNotConverged& e) {
    CHECK(e.code() == Errc::MaxIterations);
    CHECK(e.best().d.size() == 6);
  }
}

TEST_CASE("merit arithmetic") {
  DirectionProblem p = scalar(-1.0);
  DirectionSolution s;
  s.d = vec({1.0});
  s.beta = 0.05;
  p.c = 10.0;
  CHECK(descent_value_sigma(s, p, 0.1) == doctest::Approx(-1.5).epsilon(1e-15));
  s.d = vec({0.0});
  s.beta = 0.1;
  CHECK(descent_value_sigma(s, p, 0.1) == 0.0);
  CHECK(penalty_test_t(-1.5, 0.1, 10.0) == doctest::Approx(-1.49).epsilon(1e-15));
  CHECK(penalty_test_t(-1.5, 0.0, 10.0) == -1.5);
  CHECK(penalty_test_t(-0.005, 0.1, 10.0) == doctest::Approx(0.005).epsilon(1e-12));
}

TEST_CASE("property: random instances") {
  std::mt19937 rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    CAPTURE(trial);
    const int K = 1 + trial % 8, ne = trial % 3, ni = (trial / 3) % 3;
    DirectionProblem p = random_problem(rng, K, ne, ni);
    if (trial % 5 == 4 && ne + ni > 0) p.beta_nonneg = false;
    DirectionSolution s = solve_direction(p);
    CHECK(s.kkt_residual <= 1e-10);
    CHECK(kkt_defect(p, s) <= 1e-6);
    const double M = constraint_violation_M(p.g1, p.g2);
    if (p.beta_nonneg) {
      CHECK(s.beta >= 0.0);
      // (0, M) is feasible
      CHECK(s.objective <= p.c * M + 1e-12);
      double sigma = descent_value_sigma(s, p, M);
      double dn = (p.w.array() * s.d.array().square()).sum();
      CHECK(sigma <= -0.5 * dn + 1e-9);
    }
    // a second start converges to the same direction
    QpOptions o;
    o.initial_mu = Vec::Constant(2 * ne + ni, p.c / std::max(1, 2 * ne + ni));
    DirectionSolution s2 = solve_direction(p, o);
    CHECK((s.d - s2.d).lpNorm<Eigen::Infinity>() <= 1e-8);
    if (K <= 3 && p.beta_nonneg) {
      double res = K == 1 ? 1e-4 : K == 2 ? 2e-3 : 1e-2;
      CHECK(grid_search(p, res) >= s.objective - 1e-3);
    }
  }
}
