#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace proofblocks {

enum class ErrorCode {
  DimensionMismatch,
  SingularMatrix,
  NotPositiveDefinite,
  NoConvergence,
  SingularOperator,
  NotStable,
  InfeasibleGain,
  NonlinearBlock,
  AlgebraicLoop,
  MixedTime,
  SchemaError,
  SyntaxError,
  SemanticError,
  ParseError,
  UnverifiedCertificate,
  MissingStateMarker,
  MissingNoiseInput,
  UnresolvedWire,
  RegionViolation,
  UnboundInput,
  UnsupportedBlock,
  NonfiniteSignal,
  PreconditionViolation,
  Cancelled,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

enum class Severity { Error, Warning };

// A located, human-readable finding. line/column are 1-based; 0 when the
// diagnostic does not originate from a source file.
struct Diagnostic {
  std::string code;
  std::string message;
  std::vector<std::string> subjects;
  Severity severity = Severity::Error;
  int line = 0;
  int column = 0;

  std::string format() const;
};

using Diagnostics = std::vector<Diagnostic>;

bool has_errors(const Diagnostics& diags);

class DiagnosticError : public std::runtime_error {
 public:
  explicit DiagnosticError(Diagnostics diags);

  const Diagnostics& diagnostics() const noexcept { return diags_; }

 private:
  Diagnostics diags_;
};

}  // namespace proofblocks
