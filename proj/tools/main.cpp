#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cstdlib>

#include "commands.hpp"

using namespace slidecraft::app;

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("slidecraft");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("SLIDECRAFT_LOG");
  spdlog::set_level(env ? spdlog::level::from_str(env) : spdlog::level::warn);

  CLI::App app{"Optimal control of switched systems with sliding modes"};
  app.require_subcommand(1);

  std::string config, out = "out", run_dir;
  int dirs = 10;
  unsigned seed = 0;
  bool beta_nonneg = true;

  auto* sim = app.add_subcommand("simulate", "Simulate the initial control; writes trajectory.csv and switches.csv");
  sim->add_option("config", config, "Problem file")->required()->check(CLI::ExistingFile);
  sim->add_option("-o,--out", out, "Output directory");

  auto* solve = app.add_subcommand("solve", "Run the exact-penalty descent method and audit the result");
  solve->add_option("config", config, "Problem file")->required()->check(CLI::ExistingFile);
  solve->add_option("-o,--out", out, "Output directory");
  auto* beta = solve->add_option("--beta-nonneg", beta_nonneg, "Impose beta >= 0 in the direction subproblem");

  auto* grad = app.add_subcommand("gradcheck", "Compare adjoint gradients with central differences");
  grad->add_option("config", config, "Problem file")->required()->check(CLI::ExistingFile);
  grad->add_option("-o,--out", out, "Output directory");
  grad->add_option("--dirs", dirs, "Number of random directions")->check(CLI::PositiveNumber);
  auto* seed_opt = grad->add_option("--seed", seed, "Seed for the directions (default: the problem's seed)");

  auto* kkt = app.add_subcommand("check-kkt", "Audit a run directory against the optimality conditions");
  kkt->add_option("run_dir", run_dir, "Directory written by solve")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (*sim) return cmd_simulate(config, out);
  if (*solve) return cmd_solve(config, out, *beta ? std::optional<bool>(beta_nonneg) : std::nullopt);
  if (*grad) return cmd_gradcheck(config, out, dirs, *seed_opt ? std::optional<unsigned>(seed) : std::nullopt);
  return cmd_check_kkt(run_dir);
}
