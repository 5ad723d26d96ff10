#include "slidecraft/optimizer.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "slidecraft/adjoint.hpp"
#include "slidecraft/numfmt.hpp"
#include "slidecraft/sensitivity.hpp"

namespace slidecraft {

void validate_params(const AlgoParams& p) {
  auto open01 = [](double v) { return v > 0.0 && v < 1.0; };
  if (!open01(p.gamma)) raise(Errc::InputError, "algorithm.gamma must lie in (0, 1), got " + num(p.gamma));
  if (!open01(p.eta)) raise(Errc::InputError, "algorithm.eta must lie in (0, 1), got " + num(p.eta));
  if (!(p.c0 > 0.0)) raise(Errc::InputError, "algorithm.c0 must be positive, got " + num(p.c0));
  if (!(p.kappa > 1.0)) raise(Errc::InputError, "algorithm.kappa must exceed 1, got " + num(p.kappa));
  if (!(p.sigma_tol > 0.0)) raise(Errc::InputError, "algorithm.sigma_tol must be positive");
  if (!(p.feas_tol > 0.0)) raise(Errc::InputError, "algorithm.feas_tol must be positive");
  if (!(p.tol_kkt > 0.0)) raise(Errc::InputError, "algorithm.tol_kkt must be positive");
  if (p.max_outer < 1 || p.max_backtracks < 1 || p.max_penalty_updates < 1)
    raise(Errc::InputError, "algorithm iteration bounds must be positive integers");
}

MeritValue evaluate_merit(const HybridSystem& sys, const ControlGrid& u, double c, const SimConfig& cfg) {
  MeritValue m;
  m.traj = simulate(sys, u, cfg);
  m.F0 = functional_value(sys, m.traj, {FunctionalKind::Phi, 0});
  for (int i = 0; i < static_cast<int>(sys.g1.size()); ++i)
    m.g1.push_back(functional_value(sys, m.traj, {FunctionalKind::G1, i}));
  for (int j = 0; j < static_cast<int>(sys.g2.size()); ++j)
    m.g2.push_back(functional_value(sys, m.traj, {FunctionalKind::G2, j}));
  m.M = constraint_violation_M(m.g1, m.g2);
  m.Fc = m.F0 + c * m.M;
  return m;
}

FunctionalGradients functional_gradients(const HybridSystem& sys, const HybridTrajectory& traj,
                                         const ControlGrid& u) {
  auto grad = [&](FunctionalId id) { return gradient(sys, traj, u, adjoint_pass(sys, traj, u, id)); };
  FunctionalGradients g;
  g.phi = grad({FunctionalKind::Phi, 0});
  for (int i = 0; i < static_cast<int>(sys.g1.size()); ++i) g.g1.push_back(grad({FunctionalKind::G1, i}));
  for (int j = 0; j < static_cast<int>(sys.g2.size()); ++j) g.g2.push_back(grad({FunctionalKind::G2, j}));
  return g;
}

Vec flatten(const Mat& coeffs) { return Eigen::Map<const Vec>(coeffs.data(), coeffs.size()); }

Mat unflatten(const Vec& v, int m) { return Eigen::Map<const Mat>(v.data(), m, v.size() / m); }

DirectionProblem build_direction_problem(const HybridSystem& sys, const ControlGrid& u, const MeritValue& merit,
                                         const FunctionalGradients& grads, double c, bool beta_nonneg) {
  const int m = u.m();
  Mat W = u.weights().transpose().replicate(m, 1);
  Vec w = flatten(W);
  auto rep = [&](const Mat& coeff) -> Vec { return flatten(coeff).cwiseQuotient(w); };
  DirectionProblem p;
  p.g = rep(grads.phi);
  for (const Mat& a : grads.g1) p.grad_g1.push_back(rep(a));
  for (const Mat& a : grads.g2) p.grad_g2.push_back(rep(a));
  p.g1 = merit.g1;
  p.g2 = merit.g2;
  p.c = c;
  p.w = w;
  p.lo = flatten((-u.values).colwise() + sys.u_lo);
  p.hi = flatten((-u.values).colwise() + sys.u_hi);
  p.beta_nonneg = beta_nonneg;
  return p;
}

namespace {

Vec row_duals(const DirectionSolution& s) {
  const auto ne = s.mu_eq_plus.size(), ni = s.mu_in.size();
  Vec mu(2 * ne + ni);
  for (Eigen::Index i = 0; i < ne; ++i) {
    mu[2 * i] = s.mu_eq_plus[i];
    mu[2 * i + 1] = s.mu_eq_minus[i];
  }
  mu.tail(ni) = s.mu_in;
  return mu;
}

std::string bare_message(const Error& e) {
  std::string w = e.what();
  auto name = errc_name(e.code());
  if (w.compare(0, name.size(), name) == 0 && w.size() > name.size() + 2) return w.substr(name.size() + 2);
  return w;
}

}  // namespace

PenaltyChoice adjust_penalty(DirectionProblem p, double M, double c_prev, const AlgoParams& params,
                             const Vec& warm_mu) {
  QpOptions opt;
  opt.tol_kkt = params.tol_kkt;
  opt.initial_mu = warm_mu;
  PenaltyChoice out;
  double c = c_prev;
  for (int trial = 0; trial <= params.max_penalty_updates; ++trial) {
    p.c = c;
    out.sol = solve_direction(p, opt);
    out.c = c;
    out.sigma = descent_value_sigma(out.sol, p, M);
    out.t_c = penalty_test_t(out.sigma, M, c);
    out.trials = trial + 1;
    // t_c is only known to the accuracy of the subproblem
    if (out.t_c <= params.tol_kkt * std::max(1.0, std::abs(out.sol.objective))) return out;
    opt.initial_mu = row_duals(out.sol);
    c *= params.kappa;
  }
  raise(Errc::PenaltyDiverged, "t_c > 0 after " + num(params.max_penalty_updates) +
                                   " penalty increases (sigma = " + num(out.sigma) + ", M = " + num(M) +
                                   ", c = " + num(out.c) + "); the constraint qualification may fail");
}

ArmijoResult armijo_step(const HybridSystem& sys, const ControlGrid& u, const Vec& d, double sigma, double c,
                         double Fc, const AlgoParams& params, const SimConfig& cfg) {
  const Mat D = unflatten(d, u.m());
  double alpha = 1.0;
  for (int b = 0; b <= params.max_backtracks; ++b, alpha *= params.eta) {
    ControlGrid trial = u;
    trial.values += alpha * D;
    project_to_box(sys, trial);
    try {
      MeritValue mv = evaluate_merit(sys, trial, c, cfg);
      if (mv.Fc - Fc <= params.gamma * alpha * sigma) return {alpha, std::move(trial), std::move(mv), b};
    } catch (const Error& e) {
      if (is_input_error(e.code())) throw;
      // a trial point the simulator cannot handle is a rejected step
    }
  }
  raise(Errc::LineSearchStalled, "no Armijo step after " + num(params.max_backtracks) + " backtracks (sigma = " +
                                     num(sigma) + "); run gradcheck to test the gradients");
}

std::string status_name(RunStatus s) { return s == RunStatus::Optimal ? "Optimal" : "MaxIterations"; }

RunResult run(const HybridSystem& sys, const ControlGrid& u0, const AlgoParams& params, const SimConfig& cfg) {
  validate_params(params);
  if (!inside_box(sys, u0)) raise(Errc::BoxViolation, "initial control leaves the control box");
  RunResult r;
  r.u = u0;
  r.c = params.c0;
  int k = 0;
  try {
    r.merit = evaluate_merit(sys, r.u, r.c, cfg);
    Vec warm;
    for (; k < params.max_outer; ++k) {
      auto t0 = std::chrono::steady_clock::now();
      FunctionalGradients grads = functional_gradients(sys, r.merit.traj, r.u);
      DirectionProblem p = build_direction_problem(sys, r.u, r.merit, grads, r.c, params.beta_nonneg);
      PenaltyChoice pc = adjust_penalty(p, r.merit.M, r.c, params, warm);
      r.c = pc.c;
      r.last = pc.sol;
      warm = row_duals(pc.sol);

      PenaltyIterate it;
      it.k = k;
      it.c = r.c;
      it.u = flatten(r.u.values);
      it.F0 = r.merit.F0;
      it.g1 = r.merit.g1;
      it.g2 = r.merit.g2;
      it.M = r.merit.M;
      it.d = pc.sol.d;
      it.beta = pc.sol.beta;
      it.sigma = pc.sigma;
      it.t_c = pc.t_c;
      it.Fc_before = r.merit.F0 + r.c * r.merit.M;
      it.Fc_after = it.Fc_before;
      it.n_switches = static_cast<int>(r.merit.traj.switches.size());
      it.qp_iterations = pc.sol.iterations;
      it.penalty_trials = pc.trials;
      if (std::abs(pc.sigma) <= params.sigma_tol) {
        it.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        r.history.push_back(std::move(it));
        r.merit.Fc = it.Fc_before;
        r.status = RunStatus::Optimal;
        return r;
      }
      ArmijoResult ar = armijo_step(sys, r.u, pc.sol.d, pc.sigma, r.c, it.Fc_before, params, cfg);
      it.alpha = ar.alpha;
      it.backtracks = ar.backtracks;
      it.Fc_after = ar.merit_next.Fc;
      it.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      r.history.push_back(std::move(it));
      r.u = std::move(ar.u_next);
      r.merit = std::move(ar.merit_next);
    }
  } catch (const Error& e) {
    throw Error(e.code(), "iteration " + num(k) + ": " + bare_message(e));
  }
  r.status = RunStatus::MaxIterations;
  return r;
}

int penalty_settled_at(const std::vector<PenaltyIterate>& h) {
  int k = static_cast<int>(h.size());
  while (k > 0 && h[k - 1].c == h.back().c) --k;
  return k;
}

std::string convergence_csv(const std::vector<PenaltyIterate>& h) {
  std::ostringstream os;
  os << "k,c,Fc,F0,M,sigma,alpha,switches\n";
  for (const auto& it : h)
    os << it.k << ',' << num(it.c) << ',' << num(it.Fc_before) << ',' << num(it.F0) << ',' << num(it.M) << ','
       << num(it.sigma) << ',' << num(it.alpha) << ',' << it.n_switches << '\n';
  return os.str();
}

}  // namespace slidecraft
