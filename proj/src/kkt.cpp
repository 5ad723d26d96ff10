#include "slidecraft/kkt.hpp"

#include <cmath>
#include <sstream>

#include "slidecraft/numfmt.hpp"
#include "slidecraft/sensitivity.hpp"

namespace slidecraft {

Multipliers assemble_multipliers(const Vec& dual_eq_plus, const Vec& dual_eq_minus, const Vec& dual_in, double c,
                                 const std::vector<double>& g2, double feas_tol) {
  if (dual_eq_plus.size() != dual_eq_minus.size() || dual_in.size() != static_cast<Eigen::Index>(g2.size()))
    raise(Errc::DimensionError, "multiplier counts do not match the constraints");
  Multipliers m;
  m.alpha0 = 1.0;
  m.alpha1 = c * (dual_eq_plus - dual_eq_minus);
  m.alpha2 = c * dual_in;
  for (Eigen::Index j = 0; j < m.alpha2.size(); ++j)
    if (g2[j] < -feas_tol || m.alpha2[j] < 0.0) m.alpha2[j] = 0.0;
  double s = m.alpha0 + m.alpha1.cwiseAbs().sum() + m.alpha2.sum();
  if (!(s > 0.0) || !std::isfinite(s)) raise(Errc::DegenerateMultipliers, "all multipliers vanish");
  m.alpha0 /= s;
  m.alpha1 /= s;
  m.alpha2 /= s;
  m.normalization = m.alpha0 + m.alpha1.cwiseAbs().sum() + m.alpha2.sum();
  return m;
}

Multipliers assemble_multipliers(const DirectionSolution& s, double c, const std::vector<double>& g2,
                                 double feas_tol) {
  return assemble_multipliers(s.mu_eq_plus / c, s.mu_eq_minus / c, s.mu_in / c, c, g2, feas_tol);
}

Multipliers scaled(const Multipliers& m, double s) {
  Multipliers out = m;
  out.alpha0 *= s;
  out.alpha1 *= s;
  out.alpha2 *= s;
  out.normalization *= s;
  return out;
}

Row combined_terminal_row(const HybridSystem& sys, const Multipliers& mult, const Vec& x) {
  Row r = mult.alpha0 * terminal_jet(sys, {FunctionalKind::Phi, 0}, x).dx;
  for (Eigen::Index i = 0; i < mult.alpha1.size(); ++i)
    r += mult.alpha1[i] * terminal_jet(sys, {FunctionalKind::G1, static_cast<int>(i)}, x).dx;
  for (Eigen::Index j = 0; j < mult.alpha2.size(); ++j)
    if (mult.alpha2[j] != 0.0) r += mult.alpha2[j] * terminal_jet(sys, {FunctionalKind::G2, static_cast<int>(j)}, x).dx;
  return r;
}

namespace {

// max over the box of coef·(v − ū), coordinate by coordinate
double vertex_gain(const HybridSystem& sys, const Row& coef, const Vec& ubar) {
  double r = 0.0;
  for (Eigen::Index j = 0; j < coef.size(); ++j)
    r += std::max(coef[j] * (sys.u_lo[j] - ubar[j]), coef[j] * (sys.u_hi[j] - ubar[j]));
  return r;
}

void keep_worst(Located& w, double v, double t, const std::string& where) {
  if (v > w.value || (w.where.empty() && v >= w.value)) {
    w.value = v;
    w.t = t;
    w.where = where;
  }
}

std::string node_name(std::size_t k, std::size_t i) {
  return "segment " + num(static_cast<int>(k)) + " node " + num(static_cast<int>(i));
}

ExitData exit_data(const HybridSystem& sys, const SwitchRecord& sw, const ControlGrid& u) {
  Vec uL = u.at(sw.interval_left, sw.t), uR = u.at(sw.interval_right, sw.t);
  ExitData e;
  e.J = mode_jacobian(sys, 3, sw.x, uL);
  e.f_plus = mode_rhs(sys, sw.q_to, sw.x, uR);
  GuardJet g = exit_guard_jet(sys, sw.q_to, sw.x, uL);
  e.eta_x = g.dx;
  e.eta_u = g.du;
  e.u_prime = u.slope(sw.interval_left);
  e.h_minus = surface_jet(sys, sw.x).h;
  return e;
}

}  // namespace

Located check_pointwise_max(const HybridSystem& sys, const HybridTrajectory& traj, const AdjointPath& path,
                            const ControlGrid& u) {
  Located w;
  for (std::size_t k = 0; k < traj.segments.size(); ++k) {
    const Segment& seg = traj.segments[k];
    for (std::size_t i = 0; i < seg.steps.size(); ++i) {
      const Step& s = seg.steps[i];
      for (int end = 0; end < 2; ++end) {
        const double t = end ? s.tb : s.ta;
        const Vec ubar = u.at(s.interval, t);
        const ModeJacobian J = mode_jacobian(sys, s.q, end ? s.xb : s.xa, ubar);
        const Vec& l = path.lambda[k][i + end];
        keep_worst(w, vertex_gain(sys, l.transpose() * J.B, ubar), t, node_name(k, i + end));
      }
    }
  }
  for (const AdjointJump& jp : path.jumps)
    if (jp.point.size() > 0)
      keep_worst(w, vertex_gain(sys, -jp.point, u.at(jp.interval_left, jp.t)), jp.t, "exit at t = " + num(jp.t));
  return w;
}

const KktItem& KktReport::item(const std::string& name) const {
  for (const auto& it : items)
    if (it.name == name) return it;
  raise(Errc::InputError, "no KKT item named " + name);
}

std::string case_label(const HybridTrajectory& traj) {
  int entries = 0, exits = 0, crossings = 0;
  for (std::size_t k = 0; k < traj.switches.size(); ++k) {
    const SwitchRecord& sw = traj.switches[k];
    auto valid = [](int q) { return q >= 1 && q <= 3; };
    if (!valid(sw.q_from) || !valid(sw.q_to) || sw.q_from == sw.q_to)
      raise(Errc::CaseUnsupported, "interface " + num(static_cast<int>(k)) + " (q " + num(sw.q_from) + " -> " +
                                       num(sw.q_to) + " at t = " + num(sw.t) + ") has no jump rule");
    if (sw.q_to == 3)
      ++entries;
    else if (sw.q_from == 3)
      ++exits;
    else
      ++crossings;
  }
  bool sliding = false;
  for (const Segment& s : traj.segments) sliding = sliding || s.q == 3;
  if (!sliding) return "NC12";
  if (crossings == 0 && exits == 0) return "NC13";
  if (crossings == 0 && entries == 0 && exits == 1) return "NC31";
  return "composite";
}

KktReport check_conditions(const HybridSystem& sys, const HybridTrajectory& traj, const ControlGrid& u,
                           const AdjointPath& path, const Multipliers& mult, const KktTolerances& tol) {
  if (path.lambda.size() != traj.segments.size() || path.jumps.size() != traj.switches.size())
    raise(Errc::IncompletePath, "costate does not cover the trajectory");
  KktReport rep;
  rep.case_label = case_label(traj);
  const double scale = mult.normalization;
  auto inf = [](const Vec& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; };

  // (i) terminal conditions for the combined functional
  Located term;
  {
    const Row Fx = combined_terminal_row(sys, mult, traj.xf);
    const Segment& last = traj.segments.back();
    const Vec& lf = path.lambda.back().back();
    if (last.q == 3) {
      int j = last.steps.empty() ? u.interval_of(sys.tf) : last.steps.back().interval;
      ModeJacobian J = mode_jacobian(sys, 3, traj.xf, u.at(j, sys.tf));
      Vec r = lf + Fx.transpose();
      double nu = (J.hx * r).value() / J.nrm;
      rep.nu_terminal = nu;
      rep.nu_endpoint = -nu;
      rep.nu_conventions_disagree = std::abs(2.0 * nu) / scale > tol.equations;
      double v = std::max(inf(r - nu * J.hx.transpose()), std::abs((J.hx * lf).value()) / std::sqrt(J.nrm));
      keep_worst(term, v / scale, sys.tf, "tf (sliding)");
    } else {
      keep_worst(term, inf(lf + Fx.transpose()) / scale, sys.tf, "tf");
    }
  }

  // (ii)/(iii) adjoint equations replayed step by step on the stored mesh
  Located ode, dae;
  for (std::size_t k = 0; k < traj.segments.size(); ++k) {
    const Segment& seg = traj.segments[k];
    const auto& L = path.lambda[k];
    const auto& LH = path.lambda_h[k];
    if (L.size() != seg.steps.size() + 1) raise(Errc::IncompletePath, "costate missing on segment " + num(static_cast<int>(k)));
    Located& w = seg.q == 3 ? dae : ode;
    for (std::size_t i = 0; i < seg.steps.size(); ++i) {
      const Step& s = seg.steps[i];
      keep_worst(w, inf(L[i] - adjoint_step(sys, s, u, L[i + 1])) / scale, s.ta, node_name(k, i));
    }
    if (seg.q != 3) continue;
    for (std::size_t i = 0; i <= seg.steps.size(); ++i) {
      if (seg.steps.empty()) break;
      const bool right = i == seg.steps.size();
      const Step& s = seg.steps[right ? i - 1 : i];
      const Vec& x = right ? s.xb : s.xa;
      Row hx = surface_jet(sys, x).hx;
      double v = std::abs((hx * L[i]).value()) / hx.norm();
      v = std::max(v, std::abs(LH[i] - node_lambda_h(sys, s, right, u, L[i])));
      keep_worst(dae, v / scale, right ? s.tb : s.ta, node_name(k, i));
    }
  }

  // (iv) jump conditions at every interface
  Located jumps;
  for (std::size_t k = 0; k < traj.switches.size(); ++k) {
    const SwitchRecord& sw = traj.switches[k];
    const AdjointJump& jp = path.jumps[k];
    const Vec& lp = path.lambda[k + 1].front();
    const double lhp = path.lambda_h[k + 1].front();
    const Vec& lm = path.lambda[k].back();
    const double lhm = path.lambda_h[k].back();
    Vec uL = u.at(sw.interval_left, sw.t), uR = u.at(sw.interval_right, sw.t);
    SurfaceJet sj = surface_jet(sys, sw.x);
    JumpResult r;
    double ham = 0.0;
    if (sw.trigger == Trigger::GridNode) {
      r.lambda_minus = lp;
      if (sw.q_from == 3) {
        r.nu_t = -(sj.hx * lp).value() / sj.hx.squaredNorm();
        r.lambda_minus = lp + r.nu_t * sj.hx.transpose();
      }
    } else if (sw.q_from == 3) {
      ExitData e = exit_data(sys, sw, u);
      r = jump_sliding_to_smooth(e, lp);
      double etau = e.eta_u.size() && e.u_prime.size() ? (e.eta_u * e.u_prime).value() : 0.0;
      ham = lm.dot(e.J.F) - jp.r.pi * etau - e.h_minus * lhm - lp.dot(e.f_plus);
    } else if (sw.q_to == 3) {
      Vec fm = mode_rhs(sys, sw.q_from, sw.x, uL), fp = mode_rhs(sys, 3, sw.x, uR);
      r = jump_smooth_to_sliding(lp, lhp, fm, fp, sj.hx, sj.h, sys.eps_sign);
      ham = lm.dot(fm) - lp.dot(fp) + lhp * sj.h;
    } else {
      Vec fm = mode_rhs(sys, sw.q_from, sw.x, uL), fp = mode_rhs(sys, sw.q_to, sw.x, uR);
      r = jump_crossing(lp, fm, fp, sj.hx, sys.eps_sign);
      ham = lm.dot(fm) - lp.dot(fp);
    }
    double v = std::max({inf(lm - r.lambda_minus), std::abs(jp.r.pi - r.pi), std::abs(jp.r.nu_t - r.nu_t),
                         std::abs(ham)});
    keep_worst(jumps, v / scale, sw.t, "interface " + num(static_cast<int>(k)) + " (" + trigger_name(sw.trigger) + ")");
  }

  // (v) pointwise maximum and complementarity
  Located pm = check_pointwise_max(sys, traj, path, u);
  pm.value /= scale;

  Located comp, feas;
  std::vector<double> g1, g2;
  for (int i = 0; i < static_cast<int>(sys.g1.size()); ++i)
    g1.push_back(functional_value(sys, traj, {FunctionalKind::G1, i}));
  for (int j = 0; j < static_cast<int>(sys.g2.size()); ++j) {
    g2.push_back(functional_value(sys, traj, {FunctionalKind::G2, j}));
    double a = j < mult.alpha2.size() ? mult.alpha2[j] : 0.0;
    keep_worst(comp, std::max(std::abs(a * g2[j]), -a) / scale, sys.tf, "g2[" + num(j) + "]");
  }
  if (comp.where.empty()) comp.where = "no inequalities";
  keep_worst(feas, constraint_violation_M(g1, g2), sys.tf, "M");
  if (dae.where.empty()) dae.where = "no sliding arc";
  if (ode.where.empty()) ode.where = "no smooth arc";
  if (jumps.where.empty()) jumps.where = "no interfaces";

  auto add = [&](const std::string& name, const Located& w, double t) {
    rep.items.push_back({name, w, t, std::isfinite(w.value) && w.value <= t});
  };
  add("terminal", term, tol.equations);
  add("adjoint_ode", ode, tol.equations);
  add("adjoint_dae", dae, tol.equations);
  add("jumps", jumps, tol.equations);
  add("pointwise_max", pm, tol.pointwise);
  add("complementarity", comp, tol.equations);
  add("feasibility", feas, tol.feas);
  rep.all_pass = true;
  for (const auto& it : rep.items) rep.all_pass = rep.all_pass && it.pass;
  return rep;
}

namespace {

std::vector<std::vector<double>> csv_rows(const std::string& text, std::size_t cols, const std::string& what) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) raise(Errc::InputError, what + " is empty");
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> r;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) r.push_back(parse_num(cell));
    if (r.size() != cols)
      raise(Errc::InputError, what + " row " + num(static_cast<int>(rows.size()) + 1) + " has " +
                                  num(static_cast<int>(r.size())) + " columns, expected " +
                                  num(static_cast<int>(cols)));
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace

AdjointPath read_costates(const HybridSystem& sys, const HybridTrajectory& traj, const ControlGrid& u,
                          const std::string& costates_csv, const std::string& jumps_csv) {
  auto rows = csv_rows(costates_csv, sys.n + 3, "costates.csv");
  auto jrows = csv_rows(jumps_csv, 3, "costate_jumps.csv");
  std::size_t expected = 0;
  for (const Segment& s : traj.segments) expected += s.steps.size() + 1;
  if (rows.size() != expected)
    raise(Errc::InputError, "costates.csv has " + num(static_cast<int>(rows.size())) + " rows, the mesh has " +
                                num(static_cast<int>(expected)) + " nodes");
  if (jrows.size() != traj.switches.size())
    raise(Errc::InputError, "costate_jumps.csv has " + num(static_cast<int>(jrows.size())) + " rows, the run has " +
                                num(static_cast<int>(traj.switches.size())) + " switches");
  AdjointPath p;
  p.lambda.resize(traj.segments.size());
  p.lambda_h.resize(traj.segments.size());
  std::size_t r = 0;
  for (std::size_t k = 0; k < traj.segments.size(); ++k) {
    const Segment& seg = traj.segments[k];
    for (std::size_t i = 0; i <= seg.steps.size(); ++i, ++r) {
      const auto& row = rows[r];
      double t = i < seg.steps.size() ? seg.steps[i].ta : seg.t_end;
      if (static_cast<int>(row[1]) != seg.q || row[0] != t)
        raise(Errc::InputError, "costates.csv row " + num(static_cast<int>(r) + 1) + " does not match the mesh");
      Vec l(sys.n);
      for (int j = 0; j < sys.n; ++j) l[j] = row[2 + j];
      p.lambda[k].push_back(l);
      p.lambda_h[k].push_back(row[2 + sys.n]);
    }
  }
  p.jumps.resize(traj.switches.size());
  for (std::size_t k = 0; k < traj.switches.size(); ++k) {
    const SwitchRecord& sw = traj.switches[k];
    AdjointJump& jp = p.jumps[k];
    if (jrows[k][0] != sw.t)
      raise(Errc::InputError, "costate_jumps.csv row " + num(static_cast<int>(k) + 1) + " is not at a switch time");
    jp.t = sw.t;
    jp.q_from = sw.q_from;
    jp.q_to = sw.q_to;
    jp.trigger = sw.trigger;
    jp.interval_left = sw.interval_left;
    jp.lambda_plus = p.lambda[k + 1].front();
    jp.r.lambda_minus = p.lambda[k].back();
    jp.r.pi = jrows[k][1];
    jp.r.nu_t = jrows[k][2];
    if (sw.q_from == 3 && sw.trigger != Trigger::GridNode) {
      GuardJet g = exit_guard_jet(sys, sw.q_to, sw.x, u.at(sw.interval_left, sw.t));
      if (g.du.size() > 0) jp.point = jp.r.pi * g.du;
    }
  }
  return p;
}

}  // namespace slidecraft
