#pragma once

#include <optional>
#include <string>

#include "config.hpp"
#include "slidecraft/kkt.hpp"

namespace slidecraft::app {

struct GradcheckSummary {
  Json report;
  double max_rel_error = 0.0;  // adjoint vs central differences
  double max_duality = 0.0;    // adjoint vs forward linearization
};

/// Adjoint gradients of every functional against central differences and
/// the forward linearization along `dirs` seeded random directions.
GradcheckSummary gradcheck(const ProblemBundle& b, int dirs, unsigned seed, double eps = 1e-5);

/// Audits a run directory from its files. Fills kkt with the report JSON.
KktReport check_run_dir(const std::string& dir, Json& kkt);

// Subcommands. Return the process exit code: 0 success, 1 input problem,
// 2 numerical failure. Failures leave error.json in the output directory.
int cmd_simulate(const std::string& config, const std::string& out);
int cmd_solve(const std::string& config, const std::string& out, std::optional<bool> beta_nonneg);
int cmd_gradcheck(const std::string& config, const std::string& out, int dirs, std::optional<unsigned> seed);
int cmd_check_kkt(const std::string& run_dir);

}  // namespace slidecraft::app
