#pragma once

#include <vector>

#include "slidecraft/errors.hpp"
#include "slidecraft/model.hpp"

namespace slidecraft {

/// Direction-finding subproblem over flattened grid coefficients:
///
///   min ⟨g, d⟩_w + c β + ½ ‖d‖²_w
///   s.t. |g1_i + ⟨a1_i, d⟩_w| ≤ β,  g2_j + ⟨a2_j, d⟩_w ≤ β,  β ≥ 0,  lo ≤ d ≤ hi
///
/// with ⟨a, b⟩_w = Σ w_k a_k b_k. Gradients are representers in that inner
/// product (dual coefficients divided by the weights).
struct DirectionProblem {
  Vec g;
  std::vector<Vec> grad_g1, grad_g2;
  std::vector<double> g1, g2;
  double c = 1.0;
  Vec lo, hi;
  Vec w;
  bool beta_nonneg = true;
};

struct DirectionSolution {
  Vec d;
  double beta = 0.0;
  Vec alpha_eq;  // μ⁺ − μ⁻ per equality row
  Vec mu_eq_plus, mu_eq_minus;
  Vec mu_in;
  double nu_beta = 0.0;  // multiplier of β ≥ 0
  Vec box_dual;          // −(g + Σ μ a + d), nonzero on active bounds
  double objective = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
};

struct QpOptions {
  double tol_kkt = 1e-10;
  int max_iter = 200000;
  Vec initial_mu;  // optional warm start, one entry per row (E rows twice)
};

/// Thrown when the iteration budget runs out; carries the best iterate.
class QpNotConverged : public Error {
 public:
  QpNotConverged(DirectionSolution best, const std::string& msg)
      : Error(Errc::MaxIterations, msg), best_(std::move(best)) {}
  const DirectionSolution& best() const { return best_; }

 private:
  DirectionSolution best_;
};

/// max[0, max_i |g1_i|, max_j g2_j].
double constraint_violation_M(const std::vector<double>& g1, const std::vector<double>& g2);

/// Dual projected gradient with momentum and adaptive restart on the row
/// multipliers; the primal is a closed-form box projection. Throws
/// InfeasibleBox, Unbounded (β free without rows) or QpNotConverged.
DirectionSolution solve_direction(const DirectionProblem& p, const QpOptions& opt = {});

/// Objective of the subproblem at (d, β).
double direction_objective(const DirectionProblem& p, const Vec& d, double beta);

/// σ_c = ⟨g, d⟩_w + c (β − M).
double descent_value_sigma(const DirectionSolution& s, const DirectionProblem& p, double M);

/// t_c = σ + M / c.
double penalty_test_t(double sigma, double M, double c);

}  // namespace slidecraft
