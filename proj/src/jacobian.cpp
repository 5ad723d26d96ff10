#include "slidecraft/jacobian.hpp"

#include "slidecraft/errors.hpp"

namespace slidecraft {

ModeJacobian mode_jacobian(const HybridSystem& sys, int q, const Vec& x, const Vec& u) {
  ModeJacobian J;
  J.q = q;
  if (q == 1 || q == 2) {
    FieldJet fj = field_jet(sys, q, x, u);
    J.F = std::move(fj.f);
    J.A = std::move(fj.fx);
    J.B = std::move(fj.fu);
    return J;
  }
  FilippovJet fj = filippov_jet(sys, x, u);
  J.hx = fj.s.hx;
  J.H = fj.s.hxx;
  J.nrm = J.hx.squaredNorm();
  if (J.nrm == 0.0) raise(Errc::SurfaceNormalVanishes, "h_x = 0 on a sliding segment");
  J.z = -(J.hx * fj.fF).value() / J.nrm;
  J.F = fj.fF + J.hx.transpose() * J.z;
  J.G = fj.fFx + J.z * J.H;
  J.fFu = fj.fFu;
  const int n = sys.n;
  Mat P = Mat::Identity(n, n) - J.hx.transpose() * J.hx / J.nrm;
  J.A = P * J.G - J.hx.transpose() * (J.F.transpose() * J.H) / J.nrm;
  J.B = P * J.fFu;
  return J;
}

double sliding_yz(const ModeJacobian& J, const Vec& y, const Vec& du) {
  return -((J.hx * (J.G * y + J.fFu * du)).value() + (J.F.transpose() * J.H * y).value()) / J.nrm;
}

AdjointRhs adjoint_rhs(const ModeJacobian& J, const Vec& lambda) {
  if (J.q != 3) return {-J.A.transpose() * lambda, 0.0};
  Vec Gl = J.G.transpose() * lambda;
  double lh = ((J.hx * Gl).value() - (J.F.transpose() * J.H * lambda).value()) / J.nrm;
  return {-Gl + J.hx.transpose() * lh, lh};
}

Vec tangent_projection(const Row& hx, const Vec& v) {
  double nrm = hx.squaredNorm();
  if (nrm == 0.0) return v;
  return v - hx.transpose() * ((hx * v).value() / nrm);
}

}  // namespace slidecraft
