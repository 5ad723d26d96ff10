#pragma once

#include <optional>
#include <string>
#include <vector>

#include "slidecraft/control.hpp"
#include "slidecraft/model.hpp"

namespace slidecraft {

struct SimConfig {
  double h_int = 1e-3;
  double tol_surface = 1e-9;
  double tol_event = 1e-12;
  int max_switches = 64;
  double min_switch_gap = 0.0;  // 0 disables the warning
};

void validate_sim_config(const SimConfig& cfg);

/// One RK4 step. Sliding steps carry z at both ends; x_b is the projected
/// endpoint.
struct Step {
  int q = 1;
  int interval = 0;
  double ta = 0.0, tb = 0.0;
  Vec xa, xb;
  double za = 0.0, zb = 0.0;
};

struct Segment {
  int q = 1;
  double t_start = 0.0, t_end = 0.0;
  std::vector<Step> steps;
};

struct SwitchRecord {
  double t = 0.0;
  int q_from = 1, q_to = 1;
  Vec x;
  TransitionKind kind = TransitionKind::Stay;
  Trigger trigger = Trigger::Surface;
  Witness witness;
  int interval_left = 0;   // interval owning t⁻
  int interval_right = 0;  // interval owning t⁺
};

struct HybridTrajectory {
  std::vector<Segment> segments;
  std::vector<SwitchRecord> switches;
  std::vector<std::string> warnings;

  Vec xf;  // state at tf
  double zf = 0.0;
  int qf = 1;

  std::size_t step_count() const;
};

/// Result of integrating one control window in one mode.
struct WindowResult {
  std::vector<Step> steps;
  std::optional<Trigger> event;  // which guard fired at steps.back().tb
};

/// Plain RK4 stage map for a smooth mode; exposed so the variational pass
/// can replay steps exactly.
Vec rk4_smooth(const HybridSystem& sys, int q, const Vec& x, double t, double step, const ControlGrid& u,
               int interval);
/// Sliding RK4 on x' = f_F + h_xᵀ z with z eliminated per stage. Returns
/// the unprojected endpoint.
Vec rk4_sliding(const HybridSystem& sys, const Vec& x, double t, double step, const ControlGrid& u,
                int interval);
/// Newton projection onto h = 0 along h_xᵀ.
Vec project_to_surface(const HybridSystem& sys, const Vec& x, double tol_surface);

/// Right-hand side of mode q at (x, u); for q = 3 this is f_F + h_xᵀ z.
Vec mode_rhs(const HybridSystem& sys, int q, const Vec& x, const Vec& u);

/// Integrates [t_start, t_end] inside control interval `interval`, stopping
/// early at the first surface crossing. `armed` says whether the surface
/// guard may fire; it is updated as the state leaves the ±tol band.
WindowResult integrate_smooth_segment(const HybridSystem& sys, int q, const Vec& x_start, double t_start,
                                      double t_end, const ControlGrid& u, int interval,
                                      const SimConfig& cfg, bool& armed);

/// Same for the sliding mode, stopping at the first root of α or α − 1
/// (or of the user exit guard).
WindowResult integrate_sliding_segment(const HybridSystem& sys, const Vec& x_start, double t_start,
                                       double t_end, const ControlGrid& u, int interval,
                                       const SimConfig& cfg);

HybridTrajectory simulate(const HybridSystem& sys, const ControlGrid& u, const SimConfig& cfg);

/// Cubic Hermite state inside a step, with end derivatives from mode_rhs.
Vec hermite_state(const HybridSystem& sys, const Step& s, const ControlGrid& u, double t);

/// State at time t (at a switch, the value after it).
Vec state_at(const HybridSystem& sys, const HybridTrajectory& traj, const ControlGrid& u, double t);

/// Max |h| over sliding nodes and max |z|.
struct SlidingStats {
  double max_h = 0.0;
  double max_z = 0.0;
  std::size_t nodes = 0;
};
SlidingStats sliding_stats(const HybridSystem& sys, const HybridTrajectory& traj);

std::string trajectory_csv(const HybridSystem& sys, const HybridTrajectory& traj, const ControlGrid& u,
                           int stride = 1);
std::string switches_csv(const HybridSystem& sys, const HybridTrajectory& traj);

}  // namespace slidecraft
