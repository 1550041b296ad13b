#pragma once

#include <stdexcept>
#include <string>

namespace pinnplast {

/// Failure categories. Each maps onto one CLI exit code.
enum class ErrorKind {
  Config,     // bad input, schema, parse
  Mismatch,   // incompatible state: checkpoint spec, schema version
  Numerical,  // solver, optimizer or domain failure
  Missing,    // required artifact absent
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string name, const std::string& what);
  ErrorKind kind() const noexcept { return kind_; }
  /// Short machine-readable error name, e.g. "InvalidStressState".
  const std::string& name() const noexcept { return name_; }

 private:
  ErrorKind kind_;
  std::string name_;
};

#define PINNPLAST_DEFINE_ERROR(Name, Kind)                              \
  class Name : public Error {                                            \
   public:                                                               \
    explicit Name(const std::string& what) : Error(Kind, #Name, what) {} \
  };

// tensor / constitutive
PINNPLAST_DEFINE_ERROR(NonPositiveModulus, ErrorKind::Config)
PINNPLAST_DEFINE_ERROR(DamageSaturated, ErrorKind::Numerical)
PINNPLAST_DEFINE_ERROR(DegenerateStressState, ErrorKind::Numerical)
PINNPLAST_DEFINE_ERROR(NonPositiveDenominator, ErrorKind::Numerical)
// loading
PINNPLAST_DEFINE_ERROR(EmptyProgram, ErrorKind::Config)
PINNPLAST_DEFINE_ERROR(OutOfRange, ErrorKind::Config)
// forward / dataset
PINNPLAST_DEFINE_ERROR(InvalidStressState, ErrorKind::Numerical)
PINNPLAST_DEFINE_ERROR(ControlSolveFailure, ErrorKind::Numerical)
PINNPLAST_DEFINE_ERROR(StepUnderflow, ErrorKind::Numerical)
PINNPLAST_DEFINE_ERROR(DegenerateData, ErrorKind::Numerical)
PINNPLAST_DEFINE_ERROR(TooFewPoints, ErrorKind::Config)
PINNPLAST_DEFINE_ERROR(ParseError, ErrorKind::Config)
PINNPLAST_DEFINE_ERROR(SchemaVersionMismatch, ErrorKind::Mismatch)
// autodiff
PINNPLAST_DEFINE_ERROR(DomainError, ErrorKind::Numerical)
PINNPLAST_DEFINE_ERROR(StaleExpr, ErrorKind::Numerical)
// pinn
PINNPLAST_DEFINE_ERROR(LengthMismatch, ErrorKind::Config)
PINNPLAST_DEFINE_ERROR(IncompleteContext, ErrorKind::Config)
// train / network
PINNPLAST_DEFINE_ERROR(NonFiniteGradient, ErrorKind::Numerical)
PINNPLAST_DEFINE_ERROR(Diverged, ErrorKind::Numerical)
PINNPLAST_DEFINE_ERROR(SpecMismatch, ErrorKind::Mismatch)
PINNPLAST_DEFINE_ERROR(CorruptCheckpoint, ErrorKind::Mismatch)
// cli
PINNPLAST_DEFINE_ERROR(ConfigError, ErrorKind::Config)
PINNPLAST_DEFINE_ERROR(MissingRun, ErrorKind::Missing)

#undef PINNPLAST_DEFINE_ERROR

/// Process exit code for an error kind: 2 config, 3 state mismatch, 4 numerical.
int exit_code(ErrorKind kind) noexcept;

}  // namespace pinnplast
