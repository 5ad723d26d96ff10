#include "slidecraft/adjoint.hpp"

#include <Eigen/LU>
#include <cmath>
#include <sstream>

#include "slidecraft/errors.hpp"
#include "slidecraft/numfmt.hpp"

namespace slidecraft {

Vec terminal_conditions_smooth(const Row& Fx) { return -Fx.transpose(); }

SlidingTerminal terminal_conditions_sliding(const ModeJacobian& J, const Row& Fx, double eps_deg) {
  if (!(J.nrm > eps_deg)) raise(Errc::SurfaceNormalVanishes, "|h_x|^2 = " + num(J.nrm) + " at tf");
  SlidingTerminal out;
  out.nu = (J.hx * Fx.transpose()).value() / J.nrm;
  out.lambda = out.nu * J.hx.transpose() - Fx.transpose();
  out.lambda_h = adjoint_rhs(J, out.lambda).lambda_h;
  return out;
}

JumpResult jump_smooth_to_sliding(const Vec& lambda_plus, double lambda_h_plus, const Vec& f_minus,
                                  const Vec& f_plus, const Row& hx, double h_plus, double eps_sign) {
  double den = (hx * f_minus).value();
  if (!(std::abs(den) > eps_sign))
    raise(Errc::GrazingSwitch, "h_x f(t_t-) = " + num(den) + " at sliding entry");
  JumpResult r;
  r.pi = (lambda_plus.dot(f_minus) - lambda_plus.dot(f_plus) + lambda_h_plus * h_plus) / den;
  r.lambda_minus = lambda_plus - r.pi * hx.transpose();
  r.residual = std::abs(r.lambda_minus.dot(f_minus) - lambda_plus.dot(f_plus) + lambda_h_plus * h_plus);
  return r;
}

JumpResult jump_crossing(const Vec& lambda_plus, const Vec& f_minus, const Vec& f_plus, const Row& hx,
                         double eps_sign) {
  double den = (hx * f_minus).value();
  if (!(std::abs(den) > eps_sign)) raise(Errc::GrazingSwitch, "h_x f(t_t-) = " + num(den) + " at crossing");
  JumpResult r;
  r.pi = (lambda_plus.dot(f_minus) - lambda_plus.dot(f_plus)) / den;
  r.lambda_minus = lambda_plus - r.pi * hx.transpose();
  r.residual = std::abs(r.lambda_minus.dot(f_minus) - lambda_plus.dot(f_plus));
  return r;
}

namespace {

double eta_u_uprime(const ExitData& e) {
  return e.eta_u.size() > 0 && e.u_prime.size() > 0 ? (e.eta_u * e.u_prime).value() : 0.0;
}

// Rows: λ⁻ + π η_xᵀ − ν h_xᵀ = λ⁺ (n), the Hamiltonian balance, h_x λ⁻ = 0
// and the hidden constraint that fixes λ_h⁻.
void exit_system(const ExitData& e, const Vec& lambda_plus, Mat& M, Vec& rhs) {
  const ModeJacobian& J = e.J;
  const int n = static_cast<int>(J.F.size());
  M = Mat::Zero(n + 3, n + 3);
  rhs = Vec::Zero(n + 3);
  M.topLeftCorner(n, n) = Mat::Identity(n, n);
  M.block(0, n, n, 1) = e.eta_x.transpose();
  M.block(0, n + 1, n, 1) = -J.hx.transpose();
  rhs.head(n) = lambda_plus;
  M.block(n, 0, 1, n) = J.F.transpose();
  M(n, n) = -eta_u_uprime(e);
  M(n, n + 2) = -e.h_minus;
  rhs[n] = lambda_plus.dot(e.f_plus);
  M.block(n + 1, 0, 1, n) = J.hx;
  M.block(n + 2, 0, 1, n) = J.F.transpose() * J.H - J.hx * J.G.transpose();
  M(n + 2, n + 2) = J.nrm;
}

double exit_residual(const ExitData& e, const Vec& lambda_plus, const JumpResult& r) {
  Mat M;
  Vec rhs;
  exit_system(e, lambda_plus, M, rhs);
  const int n = static_cast<int>(r.lambda_minus.size());
  Vec v(n + 3);
  v << r.lambda_minus, r.pi, r.nu_t, r.lambda_h_minus;
  return (M * v - rhs).lpNorm<Eigen::Infinity>();
}

}  // namespace

JumpResult jump_sliding_to_smooth(const ExitData& e, const Vec& lambda_plus) {
  Mat M;
  Vec rhs;
  exit_system(e, lambda_plus, M, rhs);
  Eigen::FullPivLU<Mat> lu(M);
  const double rc = lu.rcond();
  if (!lu.isInvertible() || !(rc > 1e-13))
    raise(Errc::SingularJumpSystem, "sliding exit jump system, reciprocal condition " + num(rc));
  Vec v = lu.solve(rhs);
  const int n = static_cast<int>(lambda_plus.size());
  JumpResult r;
  r.lambda_minus = v.head(n);
  r.pi = v[n];
  r.nu_t = v[n + 1];
  r.lambda_h_minus = v[n + 2];
  r.residual = (M * v - rhs).lpNorm<Eigen::Infinity>();
  return r;
}

JumpResult jump_sliding_to_smooth_closed(const ExitData& e, const Vec& lambda_plus) {
  const ModeJacobian& J = e.J;
  double den = (e.eta_x * J.F).value() + eta_u_uprime(e);
  JumpResult r;
  r.pi = (lambda_plus.dot(J.F) - lambda_plus.dot(e.f_plus)) / den;
  Vec w = lambda_plus - r.pi * e.eta_x.transpose();
  r.nu_t = -(J.hx * w).value() / J.nrm;
  r.lambda_minus = w + r.nu_t * J.hx.transpose();
  r.lambda_h_minus = adjoint_rhs(J, r.lambda_minus).lambda_h;
  r.residual = exit_residual(e, lambda_plus, r);
  return r;
}

Vec adjoint_step(const HybridSystem& sys, const Step& s, const ControlGrid& u, const Vec& lambda_b) {
  const double H = s.tb - s.ta, tm = s.ta + 0.5 * H;
  if (H <= 0.0) return lambda_b;
  ModeJacobian Jb = mode_jacobian(sys, s.q, s.xb, u.at(s.interval, s.tb));
  ModeJacobian Jm = mode_jacobian(sys, s.q, hermite_state(sys, s, u, tm), u.at(s.interval, tm));
  ModeJacobian Ja = mode_jacobian(sys, s.q, s.xa, u.at(s.interval, s.ta));
  const Vec& l = lambda_b;
  Vec r1 = adjoint_rhs(Jb, l).dlambda;
  Vec r2 = adjoint_rhs(Jm, l - 0.5 * H * r1).dlambda;
  Vec r3 = adjoint_rhs(Jm, l - 0.5 * H * r2).dlambda;
  Vec r4 = adjoint_rhs(Ja, l - H * r3).dlambda;
  Vec la = l - (H / 6.0) * (r1 + 2.0 * r2 + 2.0 * r3 + r4);
  if (s.q == 3) {
    la = tangent_projection(Ja.hx, la);
    double res = std::abs((Ja.hx * la).value());
    if (!(res <= 1e-8 * std::max(1.0, la.norm())))
      raise(Errc::ProjectionFailure, "h_x lambda = " + num(res) + " after projection at t = " + num(s.ta));
  }
  if (!la.allFinite()) raise(Errc::NonFiniteState, "costate not finite at t = " + num(s.ta));
  return la;
}

double node_lambda_h(const HybridSystem& sys, const Step& s, bool right_end, const ControlGrid& u,
                     const Vec& lambda) {
  if (s.q != 3) return 0.0;
  const double t = right_end ? s.tb : s.ta;
  return adjoint_rhs(mode_jacobian(sys, s.q, right_end ? s.xb : s.xa, u.at(s.interval, t)), lambda).lambda_h;
}

void integrate_adjoint_segment(const HybridSystem& sys, const Segment& seg, const ControlGrid& u,
                               const Vec& lambda_end, std::vector<Vec>& lambda, std::vector<double>& lambda_h) {
  const std::size_t ns = seg.steps.size();
  lambda.assign(ns + 1, Vec());
  lambda_h.assign(ns + 1, 0.0);
  Vec l = lambda_end;
  for (std::size_t i = ns; i-- > 0;) {
    const Step& s = seg.steps[i];
    if (i + 1 == ns) {
      lambda[ns] = l;
      lambda_h[ns] = node_lambda_h(sys, s, true, u, l);
    }
    if (s.tb - s.ta <= 0.0) {
      lambda[i] = l;
      lambda_h[i] = lambda_h[i + 1];
      continue;
    }
    l = adjoint_step(sys, s, u, l);
    lambda[i] = l;
    lambda_h[i] = node_lambda_h(sys, s, false, u, l);
  }
  if (ns == 0) lambda[0] = l;
}

AdjointPath adjoint_pass(const HybridSystem& sys, const HybridTrajectory& traj, const ControlGrid& u,
                         const Row& Fx) {
  AdjointPath p;
  p.Fx = Fx;
  const std::size_t K = traj.segments.size();
  p.lambda.resize(K);
  p.lambda_h.resize(K);
  p.jumps.resize(traj.switches.size());
  Vec l;
  const Segment& last = traj.segments.back();
  if (last.q == 3) {
    int j = last.steps.empty() ? u.interval_of(sys.tf) : last.steps.back().interval;
    ModeJacobian J = mode_jacobian(sys, 3, traj.xf, u.at(j, sys.tf));
    SlidingTerminal st = terminal_conditions_sliding(J, Fx, sys.eps_deg);
    l = st.lambda;
    p.nu = st.nu;
  } else {
    l = terminal_conditions_smooth(Fx);
  }
  for (std::size_t k = K; k-- > 0;) {
    integrate_adjoint_segment(sys, traj.segments[k], u, l, p.lambda[k], p.lambda_h[k]);
    l = p.lambda[k].front();
    if (k == 0) break;
    const SwitchRecord& sw = traj.switches[k - 1];
    AdjointJump& jp = p.jumps[k - 1];
    jp.t = sw.t;
    jp.q_from = sw.q_from;
    jp.q_to = sw.q_to;
    jp.trigger = sw.trigger;
    jp.interval_left = sw.interval_left;
    jp.lambda_plus = l;
    Vec uL = u.at(sw.interval_left, sw.t), uR = u.at(sw.interval_right, sw.t);
    SurfaceJet sj = surface_jet(sys, sw.x);
    if (sw.trigger == Trigger::GridNode) {
      jp.r.lambda_minus = l;
      if (sw.q_from == 3) {
        double nrm = sj.hx.squaredNorm();
        jp.r.nu_t = -(sj.hx * l).value() / nrm;
        jp.r.lambda_minus = l + jp.r.nu_t * sj.hx.transpose();
      }
    } else if (sw.q_from == 3) {
      ExitData e;
      e.J = mode_jacobian(sys, 3, sw.x, uL);
      e.f_plus = mode_rhs(sys, sw.q_to, sw.x, uR);
      GuardJet g = exit_guard_jet(sys, sw.q_to, sw.x, uL);
      e.eta_x = g.dx;
      e.eta_u = g.du;
      e.u_prime = u.slope(sw.interval_left);
      e.h_minus = sj.h;
      jp.r = jump_sliding_to_smooth(e, l);
      if (!(jp.r.residual <= 1e-9 * std::max(1.0, l.lpNorm<Eigen::Infinity>())))
        raise(Errc::SingularJumpSystem, "jump system residual " + num(jp.r.residual) + " at t = " + num(sw.t));
      if (g.du.size() > 0) jp.point = jp.r.pi * g.du;
    } else if (sw.q_to == 3) {
      Vec fm = mode_rhs(sys, sw.q_from, sw.x, uL), fp = mode_rhs(sys, 3, sw.x, uR);
      jp.r = jump_smooth_to_sliding(l, p.lambda_h[k].front(), fm, fp, sj.hx, sj.h, sys.eps_sign);
    } else {
      Vec fm = mode_rhs(sys, sw.q_from, sw.x, uL), fp = mode_rhs(sys, sw.q_to, sw.x, uR);
      jp.r = jump_crossing(l, fm, fp, sj.hx, sys.eps_sign);
    }
    l = jp.r.lambda_minus;
  }
  return p;
}

AdjointPath adjoint_pass(const HybridSystem& sys, const HybridTrajectory& traj, const ControlGrid& u,
                         FunctionalId id) {
  return adjoint_pass(sys, traj, u, terminal_jet(sys, id, traj.xf).dx);
}

Mat gradient(const HybridSystem& sys, const HybridTrajectory& traj, const ControlGrid& u, const AdjointPath& p) {
  if (p.lambda.size() != traj.segments.size() || p.jumps.size() != traj.switches.size())
    raise(Errc::IncompletePath, "costate has " + num(static_cast<int>(p.lambda.size())) + " segments, trajectory " +
                                    num(static_cast<int>(traj.segments.size())));
  Mat g = Mat::Zero(u.m(), u.size());
  auto add = [&](int interval, double t, const Row& w) {
    auto st = u.stencil(interval, t);
    g.col(st.k0) += st.w0 * w.transpose();
    if (st.w1 != 0.0) g.col(st.k1) += st.w1 * w.transpose();
  };
  for (std::size_t k = 0; k < traj.segments.size(); ++k) {
    const Segment& seg = traj.segments[k];
    const auto& L = p.lambda[k];
    if (L.size() != seg.steps.size() + 1 || L.front().size() == 0)
      raise(Errc::IncompletePath, "costate missing on segment " + num(static_cast<int>(k)));
    for (std::size_t i = 0; i < seg.steps.size(); ++i) {
      const Step& s = seg.steps[i];
      const double H = s.tb - s.ta, tm = s.ta + 0.5 * H;
      if (H <= 0.0) continue;
      const int j = s.interval;
      ModeJacobian Ja = mode_jacobian(sys, s.q, s.xa, u.at(j, s.ta));
      ModeJacobian Jm = mode_jacobian(sys, s.q, hermite_state(sys, s, u, tm), u.at(j, tm));
      ModeJacobian Jb = mode_jacobian(sys, s.q, s.xb, u.at(j, s.tb));
      const Vec& la = L[i];
      const Vec& lb = L[i + 1];
      Vec lm = 0.5 * (la + lb) + (H / 8.0) * (adjoint_rhs(Ja, la).dlambda - adjoint_rhs(Jb, lb).dlambda);
      add(j, s.ta, -(H / 6.0) * (la.transpose() * Ja.B));
      add(j, tm, -(4.0 * H / 6.0) * (lm.transpose() * Jm.B));
      add(j, s.tb, -(H / 6.0) * (lb.transpose() * Jb.B));
    }
  }
  for (const AdjointJump& jp : p.jumps)
    if (jp.point.size() > 0) add(jp.interval_left, jp.t, jp.point);
  return g;
}

double pair(const Mat& grad, const ControlGrid& d) {
  if (grad.rows() != d.values.rows() || grad.cols() != d.values.cols())
    raise(Errc::MeshMismatch, "gradient and perturbation shapes differ");
  return (grad.array() * d.values.array()).sum();
}

std::string costate_csv(const HybridSystem& sys, const HybridTrajectory& traj, const AdjointPath& p, int stride) {
  std::ostringstream os;
  os << "t,q";
  for (int i = 1; i <= sys.n; ++i) os << ",lambda" << i;
  os << ",lambda_h\n";
  auto row = [&](double t, int q, const Vec& l, double lh) {
    os << num(t) << ',' << q;
    for (int i = 0; i < l.size(); ++i) os << ',' << num(l[i]);
    os << ',' << num(lh) << '\n';
  };
  stride = std::max(stride, 1);
  for (std::size_t k = 0; k < traj.segments.size(); ++k) {
    const Segment& seg = traj.segments[k];
    const std::size_t ns = seg.steps.size();
    for (std::size_t i = 0; i < ns; i += stride) row(seg.steps[i].ta, seg.q, p.lambda[k][i], p.lambda_h[k][i]);
    row(seg.t_end, seg.q, p.lambda[k][ns], p.lambda_h[k][ns]);
  }
  return os.str();
}

std::string jumps_csv(const AdjointPath& p) {
  std::ostringstream os;
  os << "t_t,pi,nu_t\n";
  for (const AdjointJump& jp : p.jumps) os << num(jp.t) << ',' << num(jp.r.pi) << ',' << num(jp.r.nu_t) << '\n';
  return os.str();
}

}  // namespace slidecraft
