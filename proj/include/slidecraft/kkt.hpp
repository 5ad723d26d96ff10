#pragma once

#include <optional>
#include <string>
#include <vector>

#include "slidecraft/adjoint.hpp"
#include "slidecraft/qp.hpp"

namespace slidecraft {

struct Multipliers {
  double alpha0 = 1.0;
  Vec alpha1;  // one per equality
  Vec alpha2;  // one per inequality, ≥ 0
  double normalization = 1.0;  // α0 + Σ|α¹| + Σα²
};

/// Duals of the normalized subproblem (Σ ≤ 1) scaled by c, α0 = 1, then
/// normalized to unit sum. Inequalities with g2 < −feas_tol get α² = 0.
/// Throws DegenerateMultipliers if everything vanishes.
Multipliers assemble_multipliers(const Vec& dual_eq_plus, const Vec& dual_eq_minus, const Vec& dual_in, double c,
                                 const std::vector<double>& g2, double feas_tol);

/// Same from a direction solution whose duals carry the penalty (Σμ ≤ c).
Multipliers assemble_multipliers(const DirectionSolution& s, double c, const std::vector<double>& g2,
                                 double feas_tol);

Multipliers scaled(const Multipliers& m, double s);

/// Terminal row of α0 φ + Σ α¹ g1 + Σ α² g2 at x.
Row combined_terminal_row(const HybridSystem& sys, const Multipliers& mult, const Vec& x);

struct Located {
  double value = 0.0;
  double t = 0.0;
  std::string where;
};

/// max over t of max_{v ∈ U} λᵀ f_u (v − ū(t)) at every mesh node, plus the
/// π η_u rows at guard-dependent exits.
Located check_pointwise_max(const HybridSystem& sys, const HybridTrajectory& traj, const AdjointPath& path,
                            const ControlGrid& u);

struct KktTolerances {
  double equations = 1e-6;
  double pointwise = 1e-6;
  double feas = 1e-6;
};

struct KktItem {
  std::string name;
  Located worst;
  double tol = 0.0;
  bool pass = false;
};

struct KktReport {
  std::string case_label;  // NC12, NC13, NC31 or composite
  std::vector<KktItem> items;
  std::optional<double> nu_terminal;  // ν h_xᵀ = F_xᵀ + λ
  std::optional<double> nu_endpoint;  // −λ = F_xᵀ + ν h_xᵀ
  bool nu_conventions_disagree = false;
  bool all_pass = false;

  const KktItem& item(const std::string& name) const;
};

/// Case label from the mode sequence. Throws CaseUnsupported at an interface
/// with no jump rule.
std::string case_label(const HybridTrajectory& traj);

/// Substitutes the stored costate into the terminal, adjoint, jump,
/// pointwise-max and complementarity conditions. Residuals of the costate
/// equations are divided by the multiplier normalization, so scaling
/// multipliers and costate together leaves every verdict unchanged.
KktReport check_conditions(const HybridSystem& sys, const HybridTrajectory& traj, const ControlGrid& u,
                           const AdjointPath& path, const Multipliers& mult, const KktTolerances& tol);

/// Rebuilds a path from exported costate and jump tables (stride 1) on the
/// mesh of traj. Throws InputError when the tables do not fit the mesh.
AdjointPath read_costates(const HybridSystem& sys, const HybridTrajectory& traj, const ControlGrid& u,
                          const std::string& costates_csv, const std::string& jumps_csv);

}  // namespace slidecraft
