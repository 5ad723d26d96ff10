#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace slidecraft {

/// Error categories raised by the library. The CLI maps them onto exit codes:
/// configuration and expression errors are user input problems (exit 1),
/// everything else is a numerical failure (exit 2).
enum class Errc {
  // expr
  SyntaxError,
  UnknownSymbol,
  DimensionError,
  DomainError,
  // model
  DegenerateFilippov,
  DegenerateTransition,
  // sim
  StepSizeError,
  NonFiniteState,
  SurfaceDriftError,
  SwitchBudgetExceeded,
  InputError,
  // sensitivity
  MeshMismatch,
  GrazingSwitch,
  BoxViolation,
  // adjoint
  SurfaceNormalVanishes,
  ProjectionFailure,
  SingularJumpSystem,
  IncompletePath,
  // qp
  MaxIterations,
  InfeasibleBox,
  Unbounded,
  // optimizer
  PenaltyDiverged,
  LineSearchStalled,
  // kkt
  DegenerateMultipliers,
  CaseUnsupported,
  // cli
  ConfigError,
};

std::string_view errc_name(Errc code) noexcept;

/// True for errors caused by the user's input rather than by the numerics.
bool is_input_error(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace slidecraft
