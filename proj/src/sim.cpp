#include "slidecraft/sim.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <sstream>

#include "slidecraft/errors.hpp"
#include "slidecraft/numfmt.hpp"

namespace slidecraft {

namespace {

// Pieces of a window shorter than this are not integrated.
constexpr double kMinPiece = 1e-14;

std::string state_text(const Vec& x) {
  std::string s = "(";
  for (int i = 0; i < x.size(); ++i) s += (i ? ", " : "") + num(x[i]);
  return s + ")";
}

void check_finite(const Vec& x, double t) {
  if (!x.allFinite()) raise(Errc::NonFiniteState, "at t = " + num(t) + ", x = " + state_text(x));
}

/// Root of c on (0, H] given c(0) < 0 <= c(H), by Illinois false position
/// with a bisection safeguard. Returns the abscissa with the smallest |c|
/// among the final bracket ends.
template <typename F>
double locate_root(F&& c, double H, double c0, double cH, double t_scale) {
  double a = 0.0, b = H, ca = c0, cb = cH;
  const double width_tol = 4 * DBL_EPSILON * std::max(1.0, std::abs(t_scale));
  if (c0 >= 0.0) return 0.0;
  int side = 0;
  for (int it = 0; it < 200 && b - a > width_tol && cb != 0.0; ++it) {
    double s = b - cb * (b - a) / (cb - ca);
    double prev_width = b - a;
    if (!(s > a && s < b)) s = 0.5 * (a + b);
    double cs = c(s);
    if (cs >= 0.0) {
      b = s;
      cb = cs;
      if (side == 1) ca *= 0.5;
      side = 1;
    } else {
      a = s;
      ca = cs;
      if (side == -1) cb *= 0.5;
      side = -1;
    }
    if (b - a > 0.5 * prev_width && it % 4 == 3) {
      // slow shrink: one bisection
      double mid = 0.5 * (a + b);
      double cm = c(mid);
      if (cm >= 0.0) {
        b = mid;
        cb = cm;
      } else {
        a = mid;
        ca = cm;
      }
      side = 0;
    }
  }
  if (a == 0.0) return b;
  return std::abs(ca) < std::abs(cb) ? a : b;
}

double step_size(double t, double t_end, double h) {
  double rest = t_end - t;
  return rest - h < kMinPiece ? rest : h;
}

struct SlidingRhs {
  Vec value;
  double z;
};

SlidingRhs sliding_rhs(const HybridSystem& sys, const Vec& x, const Vec& u) {
  SurfaceJet s = surface_jet(sys, x);
  double nrm = s.hx.squaredNorm();
  if (nrm == 0.0) raise(Errc::SurfaceNormalVanishes, "h_x = 0 at " + state_text(x));
  Vec f1 = field(sys, 1, x, u), f2 = field(sys, 2, x, u);
  double a = s.hx * f1;
  double den = a - s.hx * f2;
  if (!(std::abs(den) >= sys.eps_deg))
    raise(Errc::DegenerateFilippov, "h_x (f1 - f2) = " + num(den) + " at " + state_text(x));
  double alpha = a / den;
  Vec fF = (1.0 - alpha) * f1 + alpha * f2;
  double z = -(s.hx * fF).value() / nrm;
  return {fF + s.hx.transpose() * z, z};
}

/// Sliding persists while this is positive.
double exit_margin(const HybridSystem& sys, int target, const Vec& x, const Vec& u) {
  if (sys.eta_exit) {
    return sys.eta_exit->eval({x.data(), static_cast<std::size_t>(x.size())},
                              {u.data(), static_cast<std::size_t>(u.size())});
  }
  double alpha = filippov_alpha(sys, x, u);
  return target == 1 ? alpha : 1.0 - alpha;
}

}  // namespace

void validate_sim_config(const SimConfig& cfg) {
  if (!(cfg.h_int > 0.0)) raise(Errc::InputError, "sim.h_int must be positive");
  if (!(cfg.tol_surface > 0.0)) raise(Errc::InputError, "sim.tol_surface must be positive");
  if (!(cfg.tol_event > 0.0)) raise(Errc::InputError, "sim.tol_event must be positive");
  if (cfg.max_switches < 1) raise(Errc::InputError, "sim.max_switches must be at least 1");
  if (cfg.min_switch_gap < 0.0) raise(Errc::InputError, "sim.min_switch_gap must be non-negative");
}

std::size_t HybridTrajectory::step_count() const {
  std::size_t n = 0;
  for (const auto& s : segments) n += s.steps.size();
  return n;
}

Vec mode_rhs(const HybridSystem& sys, int q, const Vec& x, const Vec& u) {
  if (q == 3) return sliding_rhs(sys, x, u).value;
  return field(sys, q, x, u);
}

Vec rk4_smooth(const HybridSystem& sys, int q, const Vec& x, double t, double H, const ControlGrid& u,
               int interval) {
  Vec um = u.at(interval, t + 0.5 * H);
  Vec k1 = field(sys, q, x, u.at(interval, t));
  Vec k2 = field(sys, q, x + 0.5 * H * k1, um);
  Vec k3 = field(sys, q, x + 0.5 * H * k2, um);
  Vec k4 = field(sys, q, x + H * k3, u.at(interval, t + H));
  return x + (H / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Vec rk4_sliding(const HybridSystem& sys, const Vec& x, double t, double H, const ControlGrid& u,
                int interval) {
  Vec um = u.at(interval, t + 0.5 * H);
  Vec k1 = sliding_rhs(sys, x, u.at(interval, t)).value;
  Vec k2 = sliding_rhs(sys, x + 0.5 * H * k1, um).value;
  Vec k3 = sliding_rhs(sys, x + 0.5 * H * k2, um).value;
  Vec k4 = sliding_rhs(sys, x + H * k3, u.at(interval, t + H)).value;
  return x + (H / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Vec project_to_surface(const HybridSystem& sys, const Vec& x_in, double tol_surface) {
  Vec x = x_in;
  const double target = 1e-15 * std::max(1.0, x.lpNorm<Eigen::Infinity>());
  double best = INFINITY;
  for (int it = 0; it <= 10; ++it) {
    SurfaceJet s = surface_jet(sys, x);
    double ah = std::abs(s.h);
    if (ah <= target || (ah >= best && ah <= tol_surface)) break;
    if (it == 10) break;
    best = std::min(best, ah);
    double nrm = s.hx.squaredNorm();
    if (nrm == 0.0) raise(Errc::SurfaceNormalVanishes, "h_x = 0 during projection");
    x -= s.hx.transpose() * (s.h / nrm);
  }
  double h = surface(sys, x);
  if (!(std::abs(h) <= tol_surface))
    raise(Errc::SurfaceDriftError, "projection left |h| = " + num(std::abs(h)) + " at " + state_text(x));
  return x;
}

WindowResult integrate_smooth_segment(const HybridSystem& sys, int q, const Vec& x_start, double t_start,
                                      double t_end, const ControlGrid& u, int interval,
                                      const SimConfig& cfg, bool& armed) {
  if (q != 1 && q != 2) raise(Errc::InputError, "smooth segment needs q in {1, 2}");
  if (t_end - t_start < kMinPiece) raise(Errc::StepSizeError, "window [" + num(t_start) + ", " + num(t_end) + "] too short");
  const double side = q == 1 ? 1.0 : -1.0;  // side * h >= 0 means crossed
  WindowResult out;
  Vec x = x_start;
  double t = t_start;
  double hx = surface(sys, x);
  while (t_end - t >= kMinPiece) {
    double H = step_size(t, t_end, cfg.h_int);
    Vec xn = rk4_smooth(sys, q, x, t, H, u, interval);
    check_finite(xn, t + H);
    double hn = surface(sys, xn);
    if (armed && side * hn >= 0.0) {
      auto c = [&](double s) { return side * surface(sys, rk4_smooth(sys, q, x, t, s, u, interval)); };
      double s = locate_root(c, H, side * hx, side * hn, t);
      Vec xe = rk4_smooth(sys, q, x, t, s, u, interval);
      check_finite(xe, t + s);
      out.steps.push_back({q, interval, t, t + s, x, xe, 0.0, 0.0});
      out.event = Trigger::Surface;
      return out;
    }
    double tb = (H == t_end - t) ? t_end : t + H;
    out.steps.push_back({q, interval, t, tb, x, xn, 0.0, 0.0});
    x = std::move(xn);
    t = tb;
    hx = hn;
    if (std::abs(hn) > cfg.tol_surface) armed = true;
  }
  return out;
}

WindowResult integrate_sliding_segment(const HybridSystem& sys, const Vec& x_start, double t_start,
                                       double t_end, const ControlGrid& u, int interval,
                                       const SimConfig& cfg) {
  if (t_end - t_start < kMinPiece) raise(Errc::StepSizeError, "window [" + num(t_start) + ", " + num(t_end) + "] too short");
  if (std::abs(surface(sys, x_start)) > cfg.tol_surface)
    raise(Errc::SurfaceDriftError, "sliding start off the surface at t = " + num(t_start));
  WindowResult out;
  Vec x = x_start;
  double t = t_start;
  double z = sliding_rhs(sys, x, u.at(interval, t)).z;
  auto end_state = [&](double s) {
    return project_to_surface(sys, rk4_sliding(sys, x, t, s, u, interval), cfg.tol_surface);
  };
  while (t_end - t >= kMinPiece) {
    double H = step_size(t, t_end, cfg.h_int);
    Vec raw = rk4_sliding(sys, x, t, H, u, interval);
    check_finite(raw, t + H);
    Vec xn = project_to_surface(sys, raw, cfg.tol_surface);
    double tb = (H == t_end - t) ? t_end : t + H;
    Vec ub = u.at(interval, tb);
    for (int target : {1, 2}) {
      double mn = exit_margin(sys, target, xn, ub);
      if (mn > 0.0) continue;
      auto c = [&](double s) { return -exit_margin(sys, target, end_state(s), u.at(interval, t + s)); };
      double m0 = exit_margin(sys, target, x, u.at(interval, t));
      if (m0 <= 0.0)
        raise(Errc::DegenerateTransition, "sliding started outside its exit guard at t = " + num(t));
      double s = locate_root(c, H, -m0, -mn, t);
      Vec xe = end_state(s);
      double ze = sliding_rhs(sys, xe, u.at(interval, t + s)).z;
      out.steps.push_back({3, interval, t, t + s, x, xe, z, ze});
      if (sys.eta_exit)
        out.event = Trigger::ExitGuard;
      else
        out.event = target == 1 ? Trigger::AlphaZero : Trigger::AlphaOne;
      return out;
    }
    double zn = sliding_rhs(sys, xn, ub).z;
    out.steps.push_back({3, interval, t, tb, x, xn, z, zn});
    x = std::move(xn);
    z = zn;
    t = tb;
  }
  return out;
}

HybridTrajectory simulate(const HybridSystem& sys, const ControlGrid& u, const SimConfig& cfg) {
  validate_system(sys);
  validate_sim_config(cfg);
  if (u.m() != sys.m) raise(Errc::DimensionError, "control grid has wrong control dimension");
  if (u.t0 != sys.t0 || u.tf != sys.tf) raise(Errc::InputError, "control grid horizon differs from the system");

  HybridTrajectory traj;
  Vec x = sys.x0;
  double t = sys.t0;

  ModeDecision init = classify_transition(sys, 1, x, u.at(0, t), u.at(0, t), Trigger::Initial, cfg.tol_surface);
  if (init.kind == TransitionKind::Degenerate)
    raise(Errc::DegenerateTransition, "initial state on the surface with h_x f1 = " + num(init.witness.hf1) +
                                          ", h_x f2 = " + num(init.witness.hf2));
  int q = init.q_next;
  if (q == 3) {
    // consistency of the sliding start: z(t0) = 0 and h_x f_F = 0
    double e = sliding_residual_e(sys, x, u.at(0, t), 0.0);
    SurfaceJet s = surface_jet(sys, x);
    if (std::abs(e) > cfg.tol_surface * std::max(1.0, s.hx.norm()))
      raise(Errc::InputError, "inconsistent sliding initial state, e = " + num(e));
  }
  bool armed = std::abs(surface(sys, x)) > cfg.tol_surface;
  traj.segments.push_back({q, t, t, {}});

  auto record = [&](const ModeDecision& d, Trigger trig, int il, int ir) {
    if (d.kind == TransitionKind::Degenerate)
      raise(Errc::DegenerateTransition, "at t = " + num(t) + ", x = " + state_text(x) + " in mode " +
                                            std::to_string(q) + ": h_x f1 = " + num(d.witness.hf1) +
                                            ", h_x f2 = " + num(d.witness.hf2) + ", alpha = " + num(d.witness.alpha));
    if (cfg.min_switch_gap > 0.0 && !traj.switches.empty() && t - traj.switches.back().t < cfg.min_switch_gap)
      traj.warnings.push_back("switches at t = " + num(traj.switches.back().t) + " and t = " + num(t) +
                              " are closer than min_switch_gap");
    traj.switches.push_back({t, q, d.q_next, x, d.kind, trig, d.witness, il, ir});
    if (static_cast<int>(traj.switches.size()) > cfg.max_switches)
      raise(Errc::SwitchBudgetExceeded, "more than " + std::to_string(cfg.max_switches) + " switches by t = " + num(t));
    traj.segments.back().t_end = t;
    q = d.q_next;
    traj.segments.push_back({q, t, t, {}});
    armed = false;
  };

  for (int j = 0; j < u.N; ++j) {
    const double t_end = u.node(j + 1);
    while (t_end - t >= kMinPiece) {
      WindowResult w = q == 3 ? integrate_sliding_segment(sys, x, t, t_end, u, j, cfg)
                              : integrate_smooth_segment(sys, q, x, t, t_end, u, j, cfg, armed);
      auto& steps = traj.segments.back().steps;
      if (!w.steps.empty()) {
        x = w.steps.back().xb;
        t = w.steps.back().tb;
        steps.insert(steps.end(), std::make_move_iterator(w.steps.begin()), std::make_move_iterator(w.steps.end()));
      }
      if (!w.event) break;
      Vec ue = u.at(j, t);
      ModeDecision d = classify_transition(sys, q, x, ue, ue, *w.event, cfg.tol_surface);
      if (d.kind == TransitionKind::Stay)
        raise(Errc::DegenerateTransition, "exit guard fired at t = " + num(t) + " but the field signs keep sliding");
      record(d, *w.event, j, j);
    }
    if (j + 1 < u.N) {
      ModeDecision d = classify_transition(sys, q, x, u.at(j, t_end), u.at(j + 1, t_end), Trigger::GridNode,
                                           cfg.tol_surface);
      if (d.kind != TransitionKind::Stay) record(d, Trigger::GridNode, j, j + 1);
    }
  }
  traj.segments.back().t_end = sys.tf;
  traj.xf = x;
  traj.qf = q;
  traj.zf = q == 3 ? sliding_rhs(sys, x, u.at(u.N - 1, sys.tf)).z : 0.0;
  return traj;
}

Vec hermite_state(const HybridSystem& sys, const Step& s, const ControlGrid& u, double t) {
  const double H = s.tb - s.ta;
  if (H <= 0.0) return s.xa;
  Vec fa = mode_rhs(sys, s.q, s.xa, u.at(s.interval, s.ta));
  Vec fb = mode_rhs(sys, s.q, s.xb, u.at(s.interval, s.tb));
  double th = (t - s.ta) / H;
  double h00 = (1 + 2 * th) * (1 - th) * (1 - th);
  double h10 = th * (1 - th) * (1 - th);
  double h01 = th * th * (3 - 2 * th);
  double h11 = th * th * (th - 1);
  return h00 * s.xa + h10 * H * fa + h01 * s.xb + h11 * H * fb;
}

Vec state_at(const HybridSystem& sys, const HybridTrajectory& traj, const ControlGrid& u, double t) {
  const Step* last = nullptr;
  for (const auto& seg : traj.segments)
    for (const auto& s : seg.steps) {
      if (t >= s.ta && t < s.tb) return hermite_state(sys, s, u, t);
      last = &s;
    }
  if (!last) return sys.x0;
  return last->xb;
}

SlidingStats sliding_stats(const HybridSystem& sys, const HybridTrajectory& traj) {
  SlidingStats st;
  for (const auto& seg : traj.segments) {
    if (seg.q != 3) continue;
    for (const auto& s : seg.steps) {
      for (const Vec* x : {&s.xa, &s.xb}) st.max_h = std::max(st.max_h, std::abs(surface(sys, *x)));
      st.max_z = std::max({st.max_z, std::abs(s.za), std::abs(s.zb)});
      st.nodes += 2;
    }
  }
  return st;
}

std::string trajectory_csv(const HybridSystem& sys, const HybridTrajectory& traj, const ControlGrid& u,
                           int stride) {
  std::ostringstream out;
  out << "t,q";
  for (int i = 1; i <= sys.n; ++i) out << ",x" << i;
  out << ",z";
  for (int j = 1; j <= sys.m; ++j) out << ",u" << j;
  out << '\n';
  auto row = [&](double t, int q, const Vec& x, double z, const Vec& uv) {
    out << num(t) << ',' << q;
    for (int i = 0; i < x.size(); ++i) out << ',' << num(x[i]);
    out << ',' << num(z);
    for (int j = 0; j < uv.size(); ++j) out << ',' << num(uv[j]);
    out << '\n';
  };
  stride = std::max(1, stride);
  for (std::size_t k = 0; k < traj.segments.size(); ++k) {
    const auto& seg = traj.segments[k];
    if (seg.steps.empty()) {
      const Vec& x = k < traj.switches.size() ? traj.switches[k].x : traj.xf;
      row(seg.t_start, seg.q, x, 0.0, u.at(u.interval_of(seg.t_start), seg.t_start));
      continue;
    }
    for (std::size_t i = 0; i < seg.steps.size(); i += stride) {
      const Step& s = seg.steps[i];
      row(s.ta, s.q, s.xa, s.za, u.at(s.interval, s.ta));
    }
    const Step& s = seg.steps.back();
    row(s.tb, s.q, s.xb, s.zb, u.at(s.interval, s.tb));
  }
  return out.str();
}

std::string switches_csv(const HybridSystem& sys, const HybridTrajectory& traj) {
  std::ostringstream out;
  out << "t_t,q_from,q_to";
  for (int i = 1; i <= sys.n; ++i) out << ",x" << i;
  out << ",kind,trigger\n";
  for (const auto& sw : traj.switches) {
    out << num(sw.t) << ',' << sw.q_from << ',' << sw.q_to;
    for (int i = 0; i < sw.x.size(); ++i) out << ',' << num(sw.x[i]);
    out << ',' << transition_name(sw.kind) << ',' << trigger_name(sw.trigger) << '\n';
  }
  return out.str();
}

}  // namespace slidecraft
