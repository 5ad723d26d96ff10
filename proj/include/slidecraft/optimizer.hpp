#pragma once

#include <string>
#include <vector>

#include "slidecraft/qp.hpp"
#include "slidecraft/sim.hpp"

namespace slidecraft {

struct AlgoParams {
  double gamma = 0.1;
  double eta = 0.5;
  double c0 = 1.0;
  double kappa = 10.0;
  double sigma_tol = 1e-8;
  int max_outer = 200;
  int max_backtracks = 40;
  int max_penalty_updates = 20;
  double feas_tol = 1e-6;
  double tol_kkt = 1e-10;  // direction subproblem
  bool beta_nonneg = true;
};

/// Throws InputError naming the first parameter outside its range.
void validate_params(const AlgoParams& p);

struct MeritValue {
  double Fc = 0.0;
  double F0 = 0.0;
  std::vector<double> g1, g2;
  double M = 0.0;
  HybridTrajectory traj;
};

/// One simulation; F̄_c = φ(x(tf)) + c M.
MeritValue evaluate_merit(const HybridSystem& sys, const ControlGrid& u, double c, const SimConfig& cfg);

/// Dual gradient coefficients of φ and of every terminal constraint.
struct FunctionalGradients {
  Mat phi;
  std::vector<Mat> g1, g2;
};
FunctionalGradients functional_gradients(const HybridSystem& sys, const HybridTrajectory& traj,
                                         const ControlGrid& u);

/// Grid coefficients flattened column by column (coordinate fastest).
Vec flatten(const Mat& coeffs);
Mat unflatten(const Vec& v, int m);

/// Direction subproblem at u: representers g/w, box [lo − u, hi − u].
DirectionProblem build_direction_problem(const HybridSystem& sys, const ControlGrid& u, const MeritValue& merit,
                                         const FunctionalGradients& grads, double c, bool beta_nonneg);

struct PenaltyChoice {
  double c = 1.0;
  DirectionSolution sol;
  double sigma = 0.0;
  double t_c = 0.0;
  int trials = 0;
};

/// First c in {c_prev, κ c_prev, κ² c_prev, …} with t_c ≤ 0. Throws
/// PenaltyDiverged after max_penalty_updates increases.
PenaltyChoice adjust_penalty(DirectionProblem p, double M, double c_prev, const AlgoParams& params,
                             const Vec& warm_mu = Vec());

struct ArmijoResult {
  double alpha = 1.0;
  ControlGrid u_next;
  MeritValue merit_next;
  int backtracks = 0;
};

/// Largest α in {1, η, η², …} with F̄_c(u + α d) − F̄_c(u) ≤ γ α σ. Trial
/// points where the simulation fails count as rejected. Throws
/// LineSearchStalled after max_backtracks.
ArmijoResult armijo_step(const HybridSystem& sys, const ControlGrid& u, const Vec& d, double sigma, double c,
                         double Fc, const AlgoParams& params, const SimConfig& cfg);

struct PenaltyIterate {
  int k = 0;
  double c = 0.0;
  Vec u;  // flattened coefficients at the start of the iteration
  double F0 = 0.0;
  std::vector<double> g1, g2;
  double M = 0.0;
  Vec d;
  double beta = 0.0;
  double sigma = 0.0;
  double t_c = 0.0;
  double alpha = 0.0;  // 0 on the stopping iteration
  double Fc_before = 0.0, Fc_after = 0.0;
  int n_switches = 0;
  int qp_iterations = 0;
  int penalty_trials = 0;
  int backtracks = 0;
  double wall_time = 0.0;  // seconds; kept out of the report files
};

enum class RunStatus { Optimal, MaxIterations };
std::string status_name(RunStatus s);

struct RunResult {
  RunStatus status = RunStatus::MaxIterations;
  ControlGrid u;
  std::vector<PenaltyIterate> history;
  DirectionSolution last;  // subproblem of the final iterate
  MeritValue merit;        // at u
  double c = 1.0;
};

/// The exact-penalty descent loop. Errors are re-thrown with their code and
/// the iterate index prefixed to the message.
RunResult run(const HybridSystem& sys, const ControlGrid& u0, const AlgoParams& params, const SimConfig& cfg);

/// Index from which c stays at its final value.
int penalty_settled_at(const std::vector<PenaltyIterate>& h);

std::string convergence_csv(const std::vector<PenaltyIterate>& h);

}  // namespace slidecraft
