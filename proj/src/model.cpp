#include "slidecraft/model.hpp"

#include <cmath>

#include "slidecraft/errors.hpp"

namespace slidecraft {

namespace {

std::span<const double> as_span(const Vec& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

const std::vector<Expr>& field_exprs(const HybridSystem& sys, int q) {
  if (q == 1) return sys.f1;
  if (q == 2) return sys.f2;
  raise(Errc::InputError, "smooth field requested for mode " + std::to_string(q));
}

void check_expr_dims(const Expr& e, int n, int m, const std::string& what) {
  if (e.empty()) raise(Errc::InputError, what + " is empty");
  if (e.state_dim() != n || e.control_dim() != m)
    raise(Errc::DimensionError, what + " declared with wrong dimensions");
}

}  // namespace

void validate_system(const HybridSystem& sys) {
  if (sys.n < 1) raise(Errc::DimensionError, "state dimension must be positive");
  if (sys.m < 0) raise(Errc::DimensionError, "control dimension must be non-negative");
  if (static_cast<int>(sys.f1.size()) != sys.n) raise(Errc::DimensionError, "f1 must have n components");
  if (static_cast<int>(sys.f2.size()) != sys.n) raise(Errc::DimensionError, "f2 must have n components");
  for (int i = 0; i < sys.n; ++i) {
    check_expr_dims(sys.f1[i], sys.n, sys.m, "f1[" + std::to_string(i) + "]");
    check_expr_dims(sys.f2[i], sys.n, sys.m, "f2[" + std::to_string(i) + "]");
  }
  check_expr_dims(sys.h, sys.n, 0, "h");
  check_expr_dims(sys.phi, sys.n, 0, "phi");
  if (sys.eta_exit) check_expr_dims(*sys.eta_exit, sys.n, sys.m, "eta_exit");
  for (std::size_t i = 0; i < sys.g1.size(); ++i) check_expr_dims(sys.g1[i], sys.n, 0, "g1[" + std::to_string(i) + "]");
  for (std::size_t i = 0; i < sys.g2.size(); ++i) check_expr_dims(sys.g2[i], sys.n, 0, "g2[" + std::to_string(i) + "]");
  if (sys.u_lo.size() != sys.m || sys.u_hi.size() != sys.m)
    raise(Errc::DimensionError, "control box must have m intervals");
  for (int j = 0; j < sys.m; ++j)
    if (!(sys.u_lo[j] < sys.u_hi[j]))
      raise(Errc::InputError, "control box interval " + std::to_string(j) + " must satisfy lo < hi");
  if (sys.x0.size() != sys.n) raise(Errc::DimensionError, "x0 must have n entries");
  if (!(sys.t0 < sys.tf)) raise(Errc::InputError, "horizon must satisfy t0 < tf");
  if (!(sys.eps_deg > 0.0) || !(sys.eps_sign > 0.0)) raise(Errc::InputError, "tolerances must be positive");
}

std::string FunctionalId::name() const {
  switch (kind) {
    case FunctionalKind::Phi: return "phi";
    case FunctionalKind::G1: return "g1[" + std::to_string(index) + "]";
    case FunctionalKind::G2: return "g2[" + std::to_string(index) + "]";
  }
  return "?";
}

std::vector<FunctionalId> all_functionals(const HybridSystem& sys) {
  std::vector<FunctionalId> out{{FunctionalKind::Phi, 0}};
  for (int i = 0; i < static_cast<int>(sys.g1.size()); ++i) out.push_back({FunctionalKind::G1, i});
  for (int j = 0; j < static_cast<int>(sys.g2.size()); ++j) out.push_back({FunctionalKind::G2, j});
  return out;
}

const Expr& functional_expr(const HybridSystem& sys, FunctionalId id) {
  switch (id.kind) {
    case FunctionalKind::Phi: return sys.phi;
    case FunctionalKind::G1: return sys.g1.at(id.index);
    case FunctionalKind::G2: return sys.g2.at(id.index);
  }
  raise(Errc::InputError, "bad functional id");
}

ScalarJet terminal_jet(const HybridSystem& sys, FunctionalId id, const Vec& x) {
  const Expr& e = functional_expr(sys, id);
  JetValue j = eval_jet(e, as_span(x), {});
  ScalarJet out;
  out.value = j.value;
  out.dx = Eigen::Map<const Row>(j.partials.data(), sys.n);
  out.du = Row::Zero(sys.m);
  return out;
}

Vec field(const HybridSystem& sys, int q, const Vec& x, const Vec& u) {
  const auto& f = field_exprs(sys, q);
  Vec out(sys.n);
  for (int i = 0; i < sys.n; ++i) out[i] = f[i].eval(as_span(x), as_span(u));
  return out;
}

FieldJet field_jet(const HybridSystem& sys, int q, const Vec& x, const Vec& u) {
  const auto& f = field_exprs(sys, q);
  FieldJet out{Vec(sys.n), Mat(sys.n, sys.n), Mat(sys.n, sys.m)};
  thread_local JetWorkspace ws;
  std::vector<double> grad(sys.n + sys.m);
  for (int i = 0; i < sys.n; ++i) {
    out.f[i] = eval_jet(f[i], as_span(x), as_span(u), ws, grad);
    for (int k = 0; k < sys.n; ++k) out.fx(i, k) = grad[k];
    for (int k = 0; k < sys.m; ++k) out.fu(i, k) = grad[sys.n + k];
  }
  return out;
}

double surface(const HybridSystem& sys, const Vec& x) { return sys.h.eval(as_span(x), {}); }

SurfaceJet surface_jet(const HybridSystem& sys, const Vec& x, bool hessian) {
  SurfaceJet out;
  thread_local JetWorkspace ws;
  out.hx.resize(sys.n);
  out.h = eval_jet(sys.h, as_span(x), {}, ws, {out.hx.data(), static_cast<std::size_t>(sys.n)});
  if (hessian) out.hxx = eval_hessian_h(sys.h, as_span(x));
  return out;
}

namespace {

double checked_alpha(const HybridSystem& sys, double a, double den) {
  if (!(std::abs(den) >= sys.eps_deg))
    raise(Errc::DegenerateFilippov, "h_x (f1 - f2) = " + std::to_string(den) + " (h_x f1 = " +
                                        std::to_string(a) + ")");
  return a / den;
}

}  // namespace

double filippov_alpha(const HybridSystem& sys, const Vec& x, const Vec& u) {
  SurfaceJet s = surface_jet(sys, x);
  Vec f1 = field(sys, 1, x, u), f2 = field(sys, 2, x, u);
  double a = s.hx * f1;
  return checked_alpha(sys, a, a - s.hx * f2);
}

FilippovValue filippov_field(const HybridSystem& sys, const Vec& x, const Vec& u) {
  SurfaceJet s = surface_jet(sys, x);
  Vec f1 = field(sys, 1, x, u), f2 = field(sys, 2, x, u);
  double a = s.hx * f1;
  double alpha = checked_alpha(sys, a, a - s.hx * f2);
  return {(1.0 - alpha) * f1 + alpha * f2, alpha};
}

FilippovJet filippov_jet(const HybridSystem& sys, const Vec& x, const Vec& u) {
  FilippovJet out;
  out.s = surface_jet(sys, x, true);
  FieldJet j1 = field_jet(sys, 1, x, u), j2 = field_jet(sys, 2, x, u);
  const Row& hx = out.s.hx;
  const Mat& H = out.s.hxx;
  Vec df = j1.f - j2.f;
  double a = hx * j1.f;
  double den = hx * df;
  out.alpha = checked_alpha(sys, a, den);
  Row a_x = j1.f.transpose() * H + hx * j1.fx;
  Row den_x = df.transpose() * H + hx * (j1.fx - j2.fx);
  Row a_u = hx * j1.fu;
  Row den_u = hx * (j1.fu - j2.fu);
  out.alpha_x = (a_x * den - a * den_x) / (den * den);
  out.alpha_u = (a_u * den - a * den_u) / (den * den);
  double al = out.alpha;
  out.fF = (1.0 - al) * j1.f + al * j2.f;
  out.fFx = (1.0 - al) * j1.fx + al * j2.fx - df * out.alpha_x;
  out.fFu = (1.0 - al) * j1.fu + al * j2.fu - df * out.alpha_u;
  out.f1 = std::move(j1.f);
  out.f2 = std::move(j2.f);
  return out;
}

double sliding_residual_e(const Row& hx, const Vec& f, double z) {
  return (hx * f).value() + hx.squaredNorm() * z;
}

double sliding_residual_e(const HybridSystem& sys, const Vec& x, const Vec& u, double z) {
  SurfaceJet s = surface_jet(sys, x);
  FilippovValue fv = filippov_field(sys, x, u);
  return sliding_residual_e(s.hx, fv.fF, z);
}

double consistent_z(const HybridSystem& sys, const Vec& x, const Vec& u) {
  SurfaceJet s = surface_jet(sys, x);
  double nrm = s.hx.squaredNorm();
  if (nrm == 0.0) raise(Errc::SurfaceNormalVanishes, "h_x = 0");
  FilippovValue fv = filippov_field(sys, x, u);
  return -(s.hx * fv.fF).value() / nrm;
}

const char* transition_name(TransitionKind k) {
  switch (k) {
    case TransitionKind::Stay: return "stay";
    case TransitionKind::CrossTo1: return "cross_to_1";
    case TransitionKind::CrossTo2: return "cross_to_2";
    case TransitionKind::EnterSliding: return "enter_sliding";
    case TransitionKind::ExitSlidingTo1: return "exit_sliding_to_1";
    case TransitionKind::ExitSlidingTo2: return "exit_sliding_to_2";
    case TransitionKind::Degenerate: return "degenerate";
  }
  return "?";
}

const char* trigger_name(Trigger t) {
  switch (t) {
    case Trigger::Surface: return "surface";
    case Trigger::AlphaZero: return "alpha_zero";
    case Trigger::AlphaOne: return "alpha_one";
    case Trigger::ExitGuard: return "exit_guard";
    case Trigger::GridNode: return "grid_node";
    case Trigger::Initial: return "initial";
  }
  return "?";
}

ModeDecision classify_transition(const HybridSystem& sys, int q, const Vec& x, const Vec& u_left,
                                 const Vec& u_right, Trigger trigger, double tol_surface) {
  const double eps = sys.eps_sign;
  SurfaceJet s = surface_jet(sys, x);
  auto hf = [&](int mode, const Vec& u) { return double(s.hx * field(sys, mode, x, u)); };

  ModeDecision d;
  d.q_next = q;
  d.witness.h = s.h;
  auto decide = [&](TransitionKind k, int target) {
    d.kind = k;
    d.q_next = target;
    return d;
  };
  auto degenerate = [&] { return decide(TransitionKind::Degenerate, q); };
  auto pos = [eps](double v) { return v > eps; };
  auto neg = [eps](double v) { return v < -eps; };
  auto fill_alpha = [&] {
    double den = d.witness.hf1 - d.witness.hf2;
    d.witness.alpha = std::abs(den) >= sys.eps_deg ? d.witness.hf1 / den : std::nan("");
  };

  const bool on_surface = std::abs(s.h) <= tol_surface;

  if (trigger == Trigger::Initial) {
    d.witness.hf1 = hf(1, u_right);
    d.witness.hf2 = hf(2, u_right);
    fill_alpha();
    if (s.h < -tol_surface) return decide(TransitionKind::Stay, 1);
    if (s.h > tol_surface) return decide(TransitionKind::Stay, 2);
    double a = d.witness.hf1, b = d.witness.hf2;
    if (pos(a) && neg(b)) return decide(TransitionKind::EnterSliding, 3);
    if (pos(a) && pos(b)) return decide(TransitionKind::CrossTo2, 2);
    if (neg(a) && neg(b)) return decide(TransitionKind::CrossTo1, 1);
    return degenerate();
  }

  if (q == 1 || q == 2) {
    if (trigger == Trigger::GridNode && !on_surface) {
      d.witness.hf1 = hf(1, u_right);
      d.witness.hf2 = hf(2, u_right);
      fill_alpha();
      return decide(TransitionKind::Stay, q);
    }
    // arriving field with the left control, the other with the right one
    const bool from1 = q == 1;
    double arrive = hf(q, trigger == Trigger::GridNode ? u_right : u_left);
    double other = hf(from1 ? 2 : 1, u_right);
    d.witness.hf1 = from1 ? arrive : other;
    d.witness.hf2 = from1 ? other : arrive;
    fill_alpha();
    // sign of the arriving field towards the surface
    double toward = from1 ? arrive : -arrive;
    if (trigger == Trigger::GridNode && neg(toward)) return decide(TransitionKind::Stay, q);
    if (!pos(toward)) return degenerate();
    double beyond = from1 ? other : -other;  // > 0: the other field continues across
    if (pos(beyond)) return decide(from1 ? TransitionKind::CrossTo2 : TransitionKind::CrossTo1, from1 ? 2 : 1);
    if (neg(beyond)) return decide(TransitionKind::EnterSliding, 3);
    return degenerate();
  }

  if (q != 3) raise(Errc::InputError, "unknown discrete state " + std::to_string(q));

  d.witness.hf1 = hf(1, u_right);
  d.witness.hf2 = hf(2, u_right);
  fill_alpha();
  double a = d.witness.hf1, b = d.witness.hf2;
  switch (trigger) {
    case Trigger::AlphaZero:
      // h_x f1 vanishes at the root; only f2 decides
      if (neg(b)) return decide(TransitionKind::ExitSlidingTo1, 1);
      return degenerate();
    case Trigger::AlphaOne:
      if (pos(a)) return decide(TransitionKind::ExitSlidingTo2, 2);
      return degenerate();
    default:
      if (pos(a) && neg(b)) return decide(TransitionKind::Stay, 3);
      if (neg(a) && neg(b)) return decide(TransitionKind::ExitSlidingTo1, 1);
      if (pos(a) && pos(b)) return decide(TransitionKind::ExitSlidingTo2, 2);
      return degenerate();
  }
}

GuardJet exit_guard_jet(const HybridSystem& sys, int target, const Vec& x, const Vec& u) {
  GuardJet g;
  if (sys.eta_exit) {
    JetValue j = eval_jet(*sys.eta_exit, as_span(x), as_span(u));
    g.value = j.value;
    g.dx = Eigen::Map<const Row>(j.partials.data(), sys.n);
    g.du = Eigen::Map<const Row>(j.partials.data() + sys.n, sys.m);
    return g;
  }
  FilippovJet fj = filippov_jet(sys, x, u);
  g.value = target == 1 ? fj.alpha : fj.alpha - 1.0;
  g.dx = fj.alpha_x;
  g.du = fj.alpha_u;
  return g;
}

}  // namespace slidecraft
