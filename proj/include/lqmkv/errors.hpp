#pragma once

#include <stdexcept>
#include <string>

namespace lqmkv {

// Error kinds mirror the failure modes of the solver pipeline.  Every
// exception carries one of these so the CLI can map failures to exit codes
// without string matching.
enum class ErrorKind {
  DimensionMismatch,
  NonSymmetricCostMatrix,
  InvalidParams,
  SingularS,
  SingularShat,
  BlowUp,
  NoConvergence,
  NewtonDiverged,
  UnsupportedRegime,
  IntegrabilityViolation,
  UnsupportedInitialLaw,
  OutOfGrid,
  Unstable,
  BackwardSolutionMissing,
  ParseError,
  AssumptionsFailed,
};

class SolverError : public std::runtime_error {
 public:
  SolverError(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NonSymmetricCostMatrix: return "NonSymmetricCostMatrix";
    case ErrorKind::InvalidParams: return "InvalidParams";
    case ErrorKind::SingularS: return "SingularS";
    case ErrorKind::SingularShat: return "SingularShat";
    case ErrorKind::BlowUp: return "BlowUp";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::NewtonDiverged: return "NewtonDiverged";
    case ErrorKind::UnsupportedRegime: return "UnsupportedRegime";
    case ErrorKind::IntegrabilityViolation: return "IntegrabilityViolation";
    case ErrorKind::UnsupportedInitialLaw: return "UnsupportedInitialLaw";
    case ErrorKind::OutOfGrid: return "OutOfGrid";
    case ErrorKind::Unstable: return "Unstable";
    case ErrorKind::BackwardSolutionMissing: return "BackwardSolutionMissing";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::AssumptionsFailed: return "AssumptionsFailed";
  }
  return "Unknown";
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw SolverError(kind, what);
}

}  // namespace lqmkv
