#include "slidecraft/errors.hpp"

namespace slidecraft {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::SyntaxError: return "SyntaxError";
    case Errc::UnknownSymbol: return "UnknownSymbol";
    case Errc::DimensionError: return "DimensionError";
    case Errc::DomainError: return "DomainError";
    case Errc::DegenerateFilippov: return "DegenerateFilippov";
    case Errc::DegenerateTransition: return "DegenerateTransition";
    case Errc::StepSizeError: return "StepSizeError";
    case Errc::NonFiniteState: return "NonFiniteState";
    case Errc::SurfaceDriftError: return "SurfaceDriftError";
    case Errc::SwitchBudgetExceeded: return "SwitchBudgetExceeded";
    case Errc::InputError: return "InputError";
    case Errc::MeshMismatch: return "MeshMismatch";
    case Errc::GrazingSwitch: return "GrazingSwitch";
    case Errc::BoxViolation: return "BoxViolation";
    case Errc::SurfaceNormalVanishes: return "SurfaceNormalVanishes";
    case Errc::ProjectionFailure: return "ProjectionFailure";
    case Errc::SingularJumpSystem: return "SingularJumpSystem";
    case Errc::IncompletePath: return "IncompletePath";
    case Errc::MaxIterations: return "MaxIterations";
    case Errc::InfeasibleBox: return "InfeasibleBox";
    case Errc::Unbounded: return "Unbounded";
    case Errc::PenaltyDiverged: return "PenaltyDiverged";
    case Errc::LineSearchStalled: return "LineSearchStalled";
    case Errc::DegenerateMultipliers: return "DegenerateMultipliers";
    case Errc::CaseUnsupported: return "CaseUnsupported";
    case Errc::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

bool is_input_error(Errc code) noexcept {
  switch (code) {
    case Errc::SyntaxError:
    case Errc::UnknownSymbol:
    case Errc::DimensionError:
    case Errc::ConfigError:
    case Errc::InputError:
      return true;
    default:
      return false;
  }
}

}  // namespace slidecraft
