#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "slidecraft/expr.hpp"

namespace slidecraft {

using Vec = Eigen::VectorXd;
using Row = Eigen::RowVectorXd;
using Mat = Eigen::MatrixXd;

/// Two smooth modes separated by the surface h(x) = 0, plus the Filippov
/// sliding mode on it. Mode 1 lives where h < 0, mode 2 where h > 0, mode 3
/// is sliding.
struct HybridSystem {
  int n = 0;
  int m = 0;
  std::vector<Expr> f1, f2;
  Expr h;
  std::optional<Expr> eta_exit;
  Expr phi;
  std::vector<Expr> g1;  // equalities
  std::vector<Expr> g2;  // inequalities, g <= 0
  Vec u_lo, u_hi;
  Vec x0;
  double t0 = 0.0;
  double tf = 1.0;
  double eps_deg = 1e-12;
  double eps_sign = 1e-9;
};

/// Throws InputError/DimensionError on a malformed system.
void validate_system(const HybridSystem& sys);

enum class FunctionalKind { Phi, G1, G2 };

struct FunctionalId {
  FunctionalKind kind = FunctionalKind::Phi;
  int index = 0;

  std::string name() const;
  friend bool operator==(const FunctionalId&, const FunctionalId&) = default;
};

/// phi, then every g1, then every g2.
std::vector<FunctionalId> all_functionals(const HybridSystem& sys);
const Expr& functional_expr(const HybridSystem& sys, FunctionalId id);

struct ScalarJet {
  double value = 0.0;
  Row dx;
  Row du;
};

/// Value and gradient of a terminal functional.
ScalarJet terminal_jet(const HybridSystem& sys, FunctionalId id, const Vec& x);

struct FieldJet {
  Vec f;
  Mat fx;  // n x n
  Mat fu;  // n x m
};

struct SurfaceJet {
  double h = 0.0;
  Row hx;
  Mat hxx;  // only filled when requested
};

Vec field(const HybridSystem& sys, int q, const Vec& x, const Vec& u);
FieldJet field_jet(const HybridSystem& sys, int q, const Vec& x, const Vec& u);
double surface(const HybridSystem& sys, const Vec& x);
SurfaceJet surface_jet(const HybridSystem& sys, const Vec& x, bool hessian = false);

/// α = h_x f1 / (h_x (f1 − f2)), unclamped. Throws DegenerateFilippov when
/// the denominator is below eps_deg.
double filippov_alpha(const HybridSystem& sys, const Vec& x, const Vec& u);

struct FilippovValue {
  Vec fF;
  double alpha = 0.0;
};
FilippovValue filippov_field(const HybridSystem& sys, const Vec& x, const Vec& u);

/// α and f_F with their first derivatives; the surface Hessian enters α_x.
struct FilippovJet {
  Vec f1, f2, fF;
  double alpha = 0.0;
  Row alpha_x, alpha_u;
  Mat fFx, fFu;
  SurfaceJet s;
};
FilippovJet filippov_jet(const HybridSystem& sys, const Vec& x, const Vec& u);

/// e(x, z, u) = h_x f_F + ‖h_x‖² z.
double sliding_residual_e(const HybridSystem& sys, const Vec& x, const Vec& u, double z);

/// e for a given normal and field, h_x f + ‖h_x‖² z.
double sliding_residual_e(const Row& hx, const Vec& f, double z);

/// The algebraic variable that makes e vanish.
double consistent_z(const HybridSystem& sys, const Vec& x, const Vec& u);

enum class TransitionKind {
  Stay,
  CrossTo1,
  CrossTo2,
  EnterSliding,
  ExitSlidingTo1,
  ExitSlidingTo2,
  Degenerate,
};

const char* transition_name(TransitionKind k);

/// What fired: which guard hit zero, a control-grid node, or the start.
enum class Trigger { Surface, AlphaZero, AlphaOne, ExitGuard, GridNode, Initial };

const char* trigger_name(Trigger t);

struct Witness {
  double hf1 = 0.0;  // h_x f1
  double hf2 = 0.0;  // h_x f2
  double alpha = 0.0;
  double h = 0.0;
};

struct ModeDecision {
  TransitionKind kind = TransitionKind::Stay;
  int q_next = 1;
  Witness witness;
};

/// Decides the discrete state after an event or at a grid node. The guard
/// that just hit zero is named by `trigger` because its own sign carries no
/// information there. For smooth modes hitting the surface, the arriving
/// field uses u_left and the departing one u_right. Never throws for
/// ambiguous data; kind = Degenerate with the witness instead.
ModeDecision classify_transition(const HybridSystem& sys, int q, const Vec& x, const Vec& u_left,
                                 const Vec& u_right, Trigger trigger, double tol_surface = 1e-9);

/// Exit guard for the given target mode: α for mode 1, α − 1 for mode 2, or
/// the user guard when configured.
struct GuardJet {
  double value = 0.0;
  Row dx, du;
};
GuardJet exit_guard_jet(const HybridSystem& sys, int target, const Vec& x, const Vec& u);

}  // namespace slidecraft
