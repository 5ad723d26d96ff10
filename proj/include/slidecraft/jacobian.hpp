#pragma once

#include "slidecraft/model.hpp"

namespace slidecraft {

/// Right-hand side of mode q and its linearization, y' = A y + B δu.
///
/// Smooth modes: A = f_x, B = f_u. Sliding: the algebraic variation is
/// eliminated through the differentiated constraint h_x y' + x'ᵀ H y = 0,
/// giving A = P (f_F,x + z H) − h_xᵀ x'ᵀ H / ‖h_x‖² and B = P f_F,u with
/// P = I − h_xᵀ h_x / ‖h_x‖².
struct ModeJacobian {
  int q = 1;
  Vec F;
  Mat A, B;
  // sliding only
  Mat G;  // f_F,x + z H
  Mat fFu;
  Row hx;
  Mat H;
  double z = 0.0;
  double nrm = 0.0;  // ‖h_x‖²
};

ModeJacobian mode_jacobian(const HybridSystem& sys, int q, const Vec& x, const Vec& u);

/// y_z at a sliding stage for given y and δu.
double sliding_yz(const ModeJacobian& J, const Vec& y, const Vec& du);

/// λ' for the continuous adjoint of mode q at (x, u), and λ_h on sliding.
struct AdjointRhs {
  Vec dlambda;
  double lambda_h = 0.0;
};
AdjointRhs adjoint_rhs(const ModeJacobian& J, const Vec& lambda);

/// Orthogonal projection onto the tangent space {v : h_x v = 0}.
Vec tangent_projection(const Row& hx, const Vec& v);

}  // namespace slidecraft
