#pragma once

#include "slidecraft/model.hpp"

namespace slidecraft {

enum class Basis { PiecewiseConstant, PiecewiseLinear };

const char* basis_name(Basis b);

/// Control (or a perturbation of one) on the uniform grid t_j = t0 + j Δt,
/// j = 0..N. The coefficient matrix is m × N for piecewise-constant controls
/// (one value per interval) and m × (N+1) for piecewise-linear ones (one
/// value per node). Controls are continuous from the left: at t_j the value
/// of interval j−1 applies.
struct ControlGrid {
  int N = 1;
  Basis basis = Basis::PiecewiseConstant;
  double t0 = 0.0, tf = 1.0;
  Mat values;  // m × size()

  ControlGrid() = default;
  ControlGrid(int N, Basis basis, double t0, double tf, int m);

  int m() const { return static_cast<int>(values.rows()); }
  int size() const { return basis == Basis::PiecewiseConstant ? N : N + 1; }
  double dt() const { return (tf - t0) / N; }
  double node(int j) const;
  /// Interval whose closure contains t, preferring the one to the right at
  /// interior grid nodes.
  int interval_of(double t) const;

  /// u on interval j (closed), so both one-sided node values are available.
  Vec at(int interval, double t) const;
  /// du/dt on interval j.
  Vec slope(int interval) const;
  /// Basis coefficients touching interval j and their weights at time t.
  /// For piecewise constants the second entry is unused (weight 0).
  struct Stencil {
    int k0, k1;
    double w0, w1;
  };
  Stencil stencil(int interval, double t) const;

  /// L² quadrature weights per coefficient (Δt for constants; Δt/2 at the
  /// ends and Δt inside for linears, i.e. the lumped mass matrix).
  Vec weights() const;

  bool same_mesh(const ControlGrid& other) const;
};

/// Clamps every coefficient into the box.
void project_to_box(const HybridSystem& sys, ControlGrid& u);
bool inside_box(const HybridSystem& sys, const ControlGrid& u, double slack = 0.0);

/// Weighted pairing Σ_k w_k a_k b_k, summed over control coordinates.
double weighted_dot(const ControlGrid& grid, const Mat& a, const Mat& b);

}  // namespace slidecraft
