#pragma once

#include <optional>
#include <string>
#include <vector>

#include "slidecraft/jacobian.hpp"
#include "slidecraft/sim.hpp"

namespace slidecraft {

struct SlidingTerminal {
  Vec lambda;
  double lambda_h = 0.0;
  double nu = 0.0;
};

/// λ(tf) = −F_xᵀ.
Vec terminal_conditions_smooth(const Row& Fx);

/// Consistent endpoint values when the run ends sliding:
/// ν = h_x F_xᵀ/‖h_x‖², λ = ν h_xᵀ − F_xᵀ, λ_h from the hidden constraint.
/// J is the sliding Jacobian at (x(tf), u(tf)).
SlidingTerminal terminal_conditions_sliding(const ModeJacobian& J, const Row& Fx, double eps_deg);

struct JumpResult {
  Vec lambda_minus;
  double lambda_h_minus = 0.0;
  double pi = 0.0;
  double nu_t = 0.0;
  double residual = 0.0;  // largest defect of the defining equations
};

/// Entry into sliding (backward across q=1/2 → 3). f_minus is the arriving
/// field, f_plus the sliding right-hand side f_F + h_xᵀ z.
JumpResult jump_smooth_to_sliding(const Vec& lambda_plus, double lambda_h_plus, const Vec& f_minus,
                                  const Vec& f_plus, const Row& hx, double h_plus, double eps_sign);

/// Crossing q=1 ↔ 2 through the surface.
JumpResult jump_crossing(const Vec& lambda_plus, const Vec& f_minus, const Vec& f_plus, const Row& hx,
                         double eps_sign);

/// Data of a sliding exit at x(t_t).
struct ExitData {
  ModeJacobian J;  // sliding Jacobian at (x(t_t), u(t_t⁻))
  Vec f_plus;      // smooth field after the exit
  Row eta_x, eta_u;
  Vec u_prime;  // u′(t_t⁻)
  double h_minus = 0.0;
};

/// Solves the n+3 linear jump system for (λ⁻, π, ν_t, λ_h⁻).
/// Throws SingularJumpSystem when it is rank deficient.
JumpResult jump_sliding_to_smooth(const ExitData& e, const Vec& lambda_plus);

/// Closed-form elimination of the same system, used as a cross-check.
JumpResult jump_sliding_to_smooth_closed(const ExitData& e, const Vec& lambda_plus);

struct AdjointJump {
  double t = 0.0;
  int q_from = 1, q_to = 1;
  Trigger trigger = Trigger::Surface;
  JumpResult r;
  Vec lambda_plus;
  Row point;                    // π η_u, empty unless the guard depends on u
  int interval_left = 0;
};

/// Costate along a trajectory, stored on its mesh. lambda[k][i] pairs with
/// the i-th node of segment k.
struct AdjointPath {
  Row Fx;
  std::vector<std::vector<Vec>> lambda;
  std::vector<std::vector<double>> lambda_h;
  std::vector<AdjointJump> jumps;  // jumps[k] sits between segments k and k+1
  std::optional<double> nu;         // terminal ν when ending on the surface
};

/// Backward pass for the terminal gradient row F_x.
AdjointPath adjoint_pass(const HybridSystem& sys, const HybridTrajectory& traj, const ControlGrid& u,
                         const Row& Fx);

/// Backward pass for a named functional.
AdjointPath adjoint_pass(const HybridSystem& sys, const HybridTrajectory& traj, const ControlGrid& u,
                         FunctionalId id);

/// One backward RK4 step of the adjoint from λ(tb) to λ(ta); sliding steps
/// end with the tangent projection at x_a.
Vec adjoint_step(const HybridSystem& sys, const Step& s, const ControlGrid& u, const Vec& lambda_b);

/// λ_h at one end of a step (0 off the surface).
double node_lambda_h(const HybridSystem& sys, const Step& s, bool right_end, const ControlGrid& u,
                     const Vec& lambda);

/// Backward RK4 over one segment from its right end; stores nodes ascending
/// in time. Sliding steps re-project λ onto the tangent space.
void integrate_adjoint_segment(const HybridSystem& sys, const Segment& seg, const ControlGrid& u,
                               const Vec& lambda_end, std::vector<Vec>& lambda, std::vector<double>& lambda_h);

/// Coefficients c with ⟨∇F, d⟩ = Σ c ⊙ d over the grid coefficients. Throws
/// IncompletePath when the path does not cover the trajectory.
Mat gradient(const HybridSystem& sys, const HybridTrajectory& traj, const ControlGrid& u, const AdjointPath& p);

/// Pairs a gradient with a perturbation on the same grid.
double pair(const Mat& grad, const ControlGrid& d);

std::string costate_csv(const HybridSystem& sys, const HybridTrajectory& traj, const AdjointPath& p,
                        int stride = 1);
std::string jumps_csv(const AdjointPath& p);

}  // namespace slidecraft
