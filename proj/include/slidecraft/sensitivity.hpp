#pragma once

#include <vector>

#include "slidecraft/sim.hpp"

namespace slidecraft {

struct SwitchVariation {
  double dt = 0.0;
  Vec dx;
  Vec y_minus, y_plus;
};

/// Forward variation y along a trajectory for one control perturbation.
/// nodes[k][i] is y at the i-th node of segment k (steps + 1 nodes; a single
/// node for empty segments). yz[k][i] is the algebraic variation on sliding
/// nodes and 0 elsewhere.
struct VariationPath {
  std::vector<std::vector<Vec>> nodes;
  std::vector<std::vector<double>> yz;
  std::vector<SwitchVariation> switches;
  Vec y_final;
};

/// Exact linearization of the stored RK4 steps on smooth segments, stagewise
/// linearized sliding steps with tangent projection, and switch-time
/// differentials at every recorded transition. Throws MeshMismatch when d
/// lives on another grid.
VariationPath linearize_forward(const HybridSystem& sys, const HybridTrajectory& traj, const ControlGrid& u,
                                const ControlGrid& d);

/// dt = −(η_x y + η_u δu) / (η_x f + η_u u′). Throws GrazingSwitch when the
/// denominator is below eps_sign in magnitude.
double switch_dt(const Row& eta_x, const Row& eta_u, const Vec& y, const Vec& du, const Vec& f,
                 const Vec& u_prime, double eps_sign);

struct SwitchDifferential {
  double dt = 0.0;
  Vec dx;
  Vec y_plus;
};

/// For the recorded switch k with variation y⁻ just before it.
SwitchDifferential switch_time_differential(const HybridSystem& sys, const HybridTrajectory& traj,
                                            const ControlGrid& u, const Vec& y_minus, const ControlGrid& d,
                                            std::size_t k);

/// F_x(x(tf)) y(tf).
double directional_value(const HybridSystem& sys, const HybridTrajectory& traj, const VariationPath& v,
                         FunctionalId id);

struct FdRow {
  double eps = 0.0;
  double value = 0.0;
};

/// Central differences (F(u+εd) − F(u−εd)) / 2ε, two simulations per ε.
/// Throws BoxViolation when u ± εd leaves the box.
std::vector<FdRow> fd_directional_derivative(const HybridSystem& sys, const ControlGrid& u, const ControlGrid& d,
                                             FunctionalId id, const std::vector<double>& eps,
                                             const SimConfig& cfg);

/// Value of a terminal functional at the end of a simulation.
double functional_value(const HybridSystem& sys, const HybridTrajectory& traj, FunctionalId id);

}  // namespace slidecraft
