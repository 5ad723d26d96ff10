#include "slidecraft/control.hpp"

#include <algorithm>
#include <cmath>

#include "slidecraft/errors.hpp"

namespace slidecraft {

const char* basis_name(Basis b) {
  return b == Basis::PiecewiseConstant ? "piecewise_constant" : "piecewise_linear";
}

ControlGrid::ControlGrid(int N_, Basis basis_, double t0_, double tf_, int m)
    : N(N_), basis(basis_), t0(t0_), tf(tf_) {
  if (N < 1) raise(Errc::InputError, "control grid needs N >= 1");
  if (!(t0 < tf)) raise(Errc::InputError, "control grid needs t0 < tf");
  values = Mat::Zero(m, size());
}

double ControlGrid::node(int j) const {
  if (j == N) return tf;
  return t0 + j * ((tf - t0) / N);
}

int ControlGrid::interval_of(double t) const {
  int j = static_cast<int>(std::floor((t - t0) / dt()));
  j = std::clamp(j, 0, N - 1);
  // guard against the division rounding across a node
  while (j > 0 && t < node(j)) --j;
  while (j < N - 1 && t >= node(j + 1)) ++j;
  return j;
}

Vec ControlGrid::at(int interval, double t) const {
  if (basis == Basis::PiecewiseConstant) return values.col(interval);
  double a = node(interval), b = node(interval + 1);
  double s = (t - a) / (b - a);
  return (1.0 - s) * values.col(interval) + s * values.col(interval + 1);
}

Vec ControlGrid::slope(int interval) const {
  if (basis == Basis::PiecewiseConstant) return Vec::Zero(m());
  return (values.col(interval + 1) - values.col(interval)) / (node(interval + 1) - node(interval));
}

ControlGrid::Stencil ControlGrid::stencil(int interval, double t) const {
  if (basis == Basis::PiecewiseConstant) return {interval, interval, 1.0, 0.0};
  double a = node(interval), b = node(interval + 1);
  double s = (t - a) / (b - a);
  return {interval, interval + 1, 1.0 - s, s};
}

Vec ControlGrid::weights() const {
  Vec w = Vec::Constant(size(), dt());
  if (basis == Basis::PiecewiseLinear) {
    w[0] *= 0.5;
    w[N] *= 0.5;
  }
  return w;
}

bool ControlGrid::same_mesh(const ControlGrid& o) const {
  return N == o.N && basis == o.basis && t0 == o.t0 && tf == o.tf && values.rows() == o.values.rows() &&
         values.cols() == o.values.cols();
}

void project_to_box(const HybridSystem& sys, ControlGrid& u) {
  for (int j = 0; j < u.m(); ++j)
    for (int k = 0; k < u.size(); ++k) u.values(j, k) = std::clamp(u.values(j, k), sys.u_lo[j], sys.u_hi[j]);
}

bool inside_box(const HybridSystem& sys, const ControlGrid& u, double slack) {
  for (int j = 0; j < u.m(); ++j)
    for (int k = 0; k < u.size(); ++k)
      if (u.values(j, k) < sys.u_lo[j] - slack || u.values(j, k) > sys.u_hi[j] + slack) return false;
  return true;
}

double weighted_dot(const ControlGrid& grid, const Mat& a, const Mat& b) {
  Vec w = grid.weights();
  double s = 0.0;
  for (int j = 0; j < a.rows(); ++j)
    for (int k = 0; k < a.cols(); ++k) s += w[k] * a(j, k) * b(j, k);
  return s;
}

}  // namespace slidecraft
