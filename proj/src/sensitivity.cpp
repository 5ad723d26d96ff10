#include "slidecraft/sensitivity.hpp"

#include <cmath>

#include "slidecraft/errors.hpp"
#include "slidecraft/jacobian.hpp"
#include "slidecraft/numfmt.hpp"

namespace slidecraft {

namespace {

// Linearized RK4 step, stage states rebuilt from the stored x_a, so smooth
// steps are differentiated exactly.
Vec linearize_step(const HybridSystem& sys, const Step& s, const ControlGrid& u, const ControlGrid& d,
                   const Vec& y, double& yz_a, double& yz_b) {
  const double H = s.tb - s.ta;
  const int j = s.interval;
  const double t = s.ta;
  Vec u1 = u.at(j, t), um = u.at(j, t + 0.5 * H), u4 = u.at(j, t + H);
  Vec d1 = d.at(j, t), dm = d.at(j, t + 0.5 * H), d4 = d.at(j, t + H);
  ModeJacobian J1 = mode_jacobian(sys, s.q, s.xa, u1);
  if (s.q == 3) yz_a = sliding_yz(J1, y, d1);
  if (H <= 0.0) {
    yz_b = yz_a;
    return y;
  }
  Vec K1 = J1.A * y + J1.B * d1;
  ModeJacobian J2 = mode_jacobian(sys, s.q, s.xa + 0.5 * H * J1.F, um);
  Vec K2 = J2.A * (y + 0.5 * H * K1) + J2.B * dm;
  ModeJacobian J3 = mode_jacobian(sys, s.q, s.xa + 0.5 * H * J2.F, um);
  Vec K3 = J3.A * (y + 0.5 * H * K2) + J3.B * dm;
  ModeJacobian J4 = mode_jacobian(sys, s.q, s.xa + H * J3.F, u4);
  Vec K4 = J4.A * (y + H * K3) + J4.B * d4;
  Vec yb = y + (H / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4);
  if (s.q == 3) {
    // the endpoint projection linearizes to the tangent projector
    ModeJacobian Jb = mode_jacobian(sys, 3, s.xb, u4);
    yb = tangent_projection(Jb.hx, yb);
    yz_b = sliding_yz(Jb, yb, d4);
  }
  return yb;
}

}  // namespace

double switch_dt(const Row& eta_x, const Row& eta_u, const Vec& y, const Vec& du, const Vec& f,
                 const Vec& u_prime, double eps_sign) {
  double den = (eta_x * f).value();
  double numer = (eta_x * y).value();
  if (eta_u.size() > 0) {
    den += (eta_u * u_prime).value();
    numer += (eta_u * du).value();
  }
  if (!(std::abs(den) >= eps_sign))
    raise(Errc::GrazingSwitch, "transversality denominator " + num(den) + " below " + num(eps_sign));
  return -numer / den;
}

SwitchDifferential switch_time_differential(const HybridSystem& sys, const HybridTrajectory& traj,
                                            const ControlGrid& u, const Vec& y_minus, const ControlGrid& d,
                                            std::size_t k) {
  const SwitchRecord& sw = traj.switches.at(k);
  SwitchDifferential out;
  Vec uL = u.at(sw.interval_left, sw.t), uR = u.at(sw.interval_right, sw.t);
  if (sw.trigger == Trigger::GridNode) {
    out.dt = 0.0;
    out.dx = y_minus;
    out.y_plus = y_minus;
  } else {
    Vec fA = mode_rhs(sys, sw.q_from, sw.x, uL);
    Vec fB = mode_rhs(sys, sw.q_to, sw.x, uR);
    if (sw.trigger == Trigger::Surface) {
      SurfaceJet s = surface_jet(sys, sw.x);
      out.dt = switch_dt(s.hx, Row(), y_minus, Vec(), fA, Vec(), sys.eps_sign);
    } else {
      GuardJet g = exit_guard_jet(sys, sw.q_to, sw.x, uL);
      out.dt = switch_dt(g.dx, g.du, y_minus, d.at(sw.interval_left, sw.t), fA, u.slope(sw.interval_left),
                         sys.eps_sign);
    }
    out.dx = y_minus + fA * out.dt;
    out.y_plus = out.dx - fB * out.dt;
  }
  if (sw.q_to == 3) out.y_plus = tangent_projection(surface_jet(sys, sw.x).hx, out.y_plus);
  return out;
}

VariationPath linearize_forward(const HybridSystem& sys, const HybridTrajectory& traj, const ControlGrid& u,
                                const ControlGrid& d) {
  if (!d.same_mesh(u)) raise(Errc::MeshMismatch, "perturbation grid differs from the control grid");
  VariationPath v;
  Vec y = Vec::Zero(sys.n);
  for (std::size_t k = 0; k < traj.segments.size(); ++k) {
    const Segment& seg = traj.segments[k];
    std::vector<Vec> nodes{y};
    std::vector<double> yz{0.0};
    for (const Step& s : seg.steps) {
      double za = 0.0, zb = 0.0;
      y = linearize_step(sys, s, u, d, y, za, zb);
      if (!y.allFinite()) raise(Errc::NonFiniteState, "variation not finite at t = " + num(s.tb));
      yz.back() = za;
      nodes.push_back(y);
      yz.push_back(zb);
    }
    v.nodes.push_back(std::move(nodes));
    v.yz.push_back(std::move(yz));
    if (k < traj.switches.size()) {
      SwitchDifferential sd = switch_time_differential(sys, traj, u, y, d, k);
      v.switches.push_back({sd.dt, sd.dx, y, sd.y_plus});
      y = sd.y_plus;
    }
  }
  v.y_final = y;
  return v;
}

double functional_value(const HybridSystem& sys, const HybridTrajectory& traj, FunctionalId id) {
  const Vec& x = traj.xf;
  return functional_expr(sys, id).eval({x.data(), static_cast<std::size_t>(x.size())}, {});
}

double directional_value(const HybridSystem& sys, const HybridTrajectory& traj, const VariationPath& v,
                         FunctionalId id) {
  ScalarJet j = terminal_jet(sys, id, traj.xf);
  return (j.dx * v.y_final).value();
}

std::vector<FdRow> fd_directional_derivative(const HybridSystem& sys, const ControlGrid& u, const ControlGrid& d,
                                             FunctionalId id, const std::vector<double>& eps,
                                             const SimConfig& cfg) {
  if (!d.same_mesh(u)) raise(Errc::MeshMismatch, "perturbation grid differs from the control grid");
  std::vector<FdRow> out;
  for (double e : eps) {
    ControlGrid up = u, um = u;
    up.values += e * d.values;
    um.values -= e * d.values;
    if (!inside_box(sys, up) || !inside_box(sys, um))
      raise(Errc::BoxViolation, "u +/- " + num(e) + " d leaves the control box");
    double fp = functional_value(sys, simulate(sys, up, cfg), id);
    double fm = functional_value(sys, simulate(sys, um, cfg), id);
    out.push_back({e, (fp - fm) / (2.0 * e)});
  }
  return out;
}

}  // namespace slidecraft
