#include "slidecraft/qp.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <functional>

#include "slidecraft/numfmt.hpp"

namespace slidecraft {

double constraint_violation_M(const std::vector<double>& g1, const std::vector<double>& g2) {
  double M = 0.0;
  for (double v : g1) M = std::max(M, std::abs(v));
  for (double v : g2) M = std::max(M, v);
  return M;
}

double direction_objective(const DirectionProblem& p, const Vec& d, double beta) {
  return (p.w.array() * (p.g.array() * d.array() + 0.5 * d.array().square())).sum() + p.c * beta;
}

double descent_value_sigma(const DirectionSolution& s, const DirectionProblem& p, double M) {
  return (p.w.array() * p.g.array() * s.d.array()).sum() + p.c * (s.beta - M);
}

double penalty_test_t(double sigma, double M, double c) { return sigma + M / c; }

namespace {

// Euclidean projection onto {μ ≥ 0, Σμ ≤ cap} (or Σμ = cap when `equal`).
Vec project_capped_simplex(const Vec& v, double cap, bool equal) {
  Vec clipped = v.cwiseMax(0.0);
  if (!equal && clipped.sum() <= cap) return clipped;
  std::vector<double> s(v.data(), v.data() + v.size());
  std::sort(s.begin(), s.end(), std::greater<>());
  double acc = 0.0, theta = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    acc += s[k];
    double th = (acc - cap) / static_cast<double>(k + 1);
    if (k + 1 == s.size() || s[k + 1] <= th) {
      theta = th;
      break;
    }
  }
  return (v.array() - theta).cwiseMax(0.0);
}

struct Rows {
  Mat A;  // R × K representers
  Vec c;  // constants
  int ne = 0, ni = 0;
};

Rows build_rows(const DirectionProblem& p) {
  Rows r;
  r.ne = static_cast<int>(p.g1.size());
  r.ni = static_cast<int>(p.g2.size());
  const int K = static_cast<int>(p.g.size());
  const int R = 2 * r.ne + r.ni;
  r.A.resize(R, K);
  r.c.resize(R);
  for (int i = 0; i < r.ne; ++i) {
    r.A.row(2 * i) = p.grad_g1[i].transpose();
    r.c[2 * i] = p.g1[i];
    r.A.row(2 * i + 1) = -p.grad_g1[i].transpose();
    r.c[2 * i + 1] = -p.g1[i];
  }
  for (int j = 0; j < r.ni; ++j) {
    r.A.row(2 * r.ne + j) = p.grad_g2[j].transpose();
    r.c[2 * r.ne + j] = p.g2[j];
  }
  return r;
}

void check_problem(const DirectionProblem& p) {
  const auto K = p.g.size();
  if (p.lo.size() != K || p.hi.size() != K || p.w.size() != K)
    raise(Errc::DimensionError, "direction problem vectors differ in length");
  if (p.grad_g1.size() != p.g1.size() || p.grad_g2.size() != p.g2.size())
    raise(Errc::DimensionError, "constraint values and gradients differ in count");
  for (const auto& a : p.grad_g1)
    if (a.size() != K) raise(Errc::DimensionError, "equality gradient has the wrong length");
  for (const auto& a : p.grad_g2)
    if (a.size() != K) raise(Errc::DimensionError, "inequality gradient has the wrong length");
  if (!(p.c > 0.0)) raise(Errc::InputError, "penalty weight must be positive, got " + num(p.c));
  for (Eigen::Index k = 0; k < K; ++k) {
    if (!(p.lo[k] <= 1e-14 && p.hi[k] >= -1e-14))
      raise(Errc::InfeasibleBox, "box [" + num(p.lo[k]) + ", " + num(p.hi[k]) + "] at coefficient " +
                                     num(static_cast<int>(k)) + " excludes d = 0");
    if (!(p.w[k] > 0.0)) raise(Errc::InputError, "quadrature weights must be positive");
  }
}

}  // namespace

DirectionSolution solve_direction(const DirectionProblem& p, const QpOptions& opt) {
  check_problem(p);
  Rows rows = build_rows(p);
  const int R = static_cast<int>(rows.c.size());
  const Vec lo = p.lo.cwiseMin(0.0), hi = p.hi.cwiseMax(0.0);
  if (R == 0 && !p.beta_nonneg) raise(Errc::Unbounded, "beta is free and there are no constraint rows");

  Mat AW = rows.A * p.w.asDiagonal();
  auto primal = [&](const Vec& mu) -> Vec {
    Vec v = p.g;
    if (R > 0) v += rows.A.transpose() * mu;
    return (-v).cwiseMax(lo).cwiseMin(hi);
  };

  DirectionSolution best;
  Vec best_mu;
  double best_gap = INFINITY;
  auto evaluate = [&](const Vec& mu, int iter) {
    DirectionSolution s;
    s.d = primal(mu);
    Vec rv = R > 0 ? Vec(rows.c + AW * s.d) : Vec();
    double top = R > 0 ? rv.maxCoeff() : -INFINITY;
    s.beta = p.beta_nonneg ? std::max(0.0, top) : top;
    s.nu_beta = p.beta_nonneg ? p.c - mu.sum() : 0.0;
    double gap = s.nu_beta * s.beta;
    for (int r = 0; r < R; ++r) gap += mu[r] * (s.beta - rv[r]);
    s.objective = direction_objective(p, s.d, s.beta);
    s.kkt_residual = std::abs(gap) / std::max(1.0, std::abs(s.objective));
    s.iterations = iter;
    s.mu_eq_plus.resize(rows.ne);
    s.mu_eq_minus.resize(rows.ne);
    for (int i = 0; i < rows.ne; ++i) {
      s.mu_eq_plus[i] = mu[2 * i];
      s.mu_eq_minus[i] = mu[2 * i + 1];
    }
    s.alpha_eq = s.mu_eq_plus - s.mu_eq_minus;
    s.mu_in = mu.tail(rows.ni);
    Vec v = p.g + s.d;
    if (R > 0) v += rows.A.transpose() * mu;
    s.box_dual = -v;
    for (Eigen::Index k = 0; k < s.d.size(); ++k)
      if (s.d[k] > lo[k] && s.d[k] < hi[k]) s.box_dual[k] = 0.0;
    if (s.kkt_residual < best_gap) {
      best_gap = s.kkt_residual;
      best = s;
      best_mu = mu;
    }
    return s.kkt_residual;
  };

  if (R == 0) {
    evaluate(Vec(), 0);
    return best;
  }

  // the dual gradient is Lipschitz with the largest eigenvalue of A W Aᵀ
  Mat gram = AW * rows.A.transpose();
  double L = Eigen::SelfAdjointEigenSolver<Mat>(gram, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
  L = std::max(L, 1e-12);
  auto dual_value = [&](const Vec& mu) {
    Vec d = primal(mu);
    Vec v = p.g + rows.A.transpose() * mu;
    return (p.w.array() * (v.array() * d.array() + 0.5 * d.array().square())).sum() + rows.c.dot(mu);
  };
  auto project = [&](const Vec& v) { return project_capped_simplex(v, p.c, !p.beta_nonneg); };

  // Guess the active rows and free coordinates from μ and solve the
  // resulting equality system exactly; evaluate() decides whether it holds.
  auto polish = [&](const Vec& mu0, double delta) -> Vec {
    Vec d = primal(mu0);
    Vec rv = rows.c + AW * d;
    double top = rv.maxCoeff();
    double beta = p.beta_nonneg ? std::max(0.0, top) : top;
    // with E nonempty a free β is bounded by 0 as well
    const bool beta_zero = (p.beta_nonneg || rows.ne > 0) && std::abs(beta) <= delta;
    std::vector<int> S;
    std::vector<bool> in_s(R, false);
    for (int r = 0; r < R; ++r) in_s[r] = beta - rv[r] <= delta;
    // both sides of an equality can only be active at β = 0; one signed
    // multiplier then replaces the pair
    std::vector<bool> is_signed(R, false);
    for (int i = 0; i < rows.ne; ++i)
      if (beta_zero && in_s[2 * i] && in_s[2 * i + 1]) {
        in_s[2 * i + 1] = false;
        is_signed[2 * i] = true;
      }
    for (int r = 0; r < R; ++r)
      if (in_s[r]) S.push_back(r);
    Vec free = Vec::Zero(d.size());
    for (Eigen::Index k = 0; k < d.size(); ++k)
      if (d[k] > lo[k] && d[k] < hi[k]) free[k] = 1.0;
    const int ns = static_cast<int>(S.size());
    Mat M = Mat::Zero(ns + 1, ns + 1);
    Vec b = Vec::Zero(ns + 1);
    Vec wf = p.w.cwiseProduct(free);
    Vec dfix = d.cwiseProduct(Vec::Ones(d.size()) - free);
    for (int i = 0; i < ns; ++i) {
      const auto ar = rows.A.row(S[i]);
      for (int j = 0; j < ns; ++j) M(i, j) = (ar.transpose().array() * wf.array() * rows.A.row(S[j]).transpose().array()).sum();
      M(i, ns) = 1.0;
      b[i] = rows.c[S[i]] + (ar.transpose().array() * p.w.array() * dfix.array()).sum() -
             (ar.transpose().array() * wf.array() * p.g.array()).sum();
    }
    if (beta_zero) {
      M(ns, ns) = 1.0;
    } else {
      M.block(ns, 0, 1, ns).setOnes();
      b[ns] = p.c;
    }
    Vec sol = Eigen::CompleteOrthogonalDecomposition<Mat>(M).solve(b);
    Vec mu = Vec::Zero(R);
    int pair = -1;
    for (int i = 0; i < ns; ++i) {
      if (is_signed[S[i]]) pair = S[i];
      if (is_signed[S[i]] && sol[i] < 0.0) mu[S[i] + 1] = -sol[i];
      else mu[S[i]] = sol[i];
    }
    if (!p.beta_nonneg && beta_zero) {
      // Σμ = c is met by loading both sides of an active pair equally,
      // which leaves d unchanged
      double slack = p.c - mu.sum();
      if (pair < 0 || slack < 0.0) return project(mu);
      mu[pair] += 0.5 * slack;
      mu[pair + 1] += 0.5 * slack;
    }
    return project(mu);
  };
  auto try_polish = [&](const Vec& mu0, int it, double target) {
    for (double delta : {1e-4, 1e-6, 1e-8, 1e-10}) {
      Vec m = polish(mu0, delta);
      for (int rep = 0; rep < 4; ++rep) {
        if (evaluate(m, it) <= target) return true;
        m = polish(m, 1e-12);
      }
    }
    return false;
  };
  // the residual bounds ‖d − d*‖²_w only to first order, so a converged
  // iterate is still polished when that sharpens it
  constexpr double kPolished = 1e-15;
  auto finish = [&](const Vec& m, int it) {
    try_polish(m, it, kPolished);
    return best;
  };

  Vec mu = opt.initial_mu.size() == R ? project(opt.initial_mu) : project(Vec::Zero(R));
  if (evaluate(mu, 0) <= opt.tol_kkt) return finish(mu, 0);
  Vec y = mu;
  double t = 1.0, qmu = dual_value(mu);
  for (int it = 1; it <= opt.max_iter; ++it) {
    Vec grad = rows.c + AW * primal(y);
    Vec next = project(y + grad / L);
    double qn = dual_value(next);
    if (evaluate(next, it) <= opt.tol_kkt) return finish(next, it);
    if (it % 25 == 0 && try_polish(next, it, opt.tol_kkt)) return finish(best_mu, it);
    if (qn < qmu) {
      // restart the momentum when the dual value drops
      t = 1.0;
      y = mu;
      continue;
    }
    double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = next + ((t - 1.0) / tn) * (next - mu);
    mu = std::move(next);
    qmu = qn;
    t = tn;
  }
  throw QpNotConverged(best, "direction subproblem: KKT residual " + num(best_gap) + " after " +
                                 num(opt.max_iter) + " iterations");
}

}  // namespace slidecraft
