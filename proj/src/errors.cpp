#include "proofblocks/errors.hpp"

#include <algorithm>
#include <sstream>

namespace proofblocks {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::SingularMatrix: return "SingularMatrix";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::SingularOperator: return "SingularOperator";
    case ErrorCode::NotStable: return "NotStable";
    case ErrorCode::InfeasibleGain: return "InfeasibleGain";
    case ErrorCode::NonlinearBlock: return "NonlinearBlock";
    case ErrorCode::AlgebraicLoop: return "AlgebraicLoop";
    case ErrorCode::MixedTime: return "MixedTime";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::SemanticError: return "SemanticError";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnverifiedCertificate: return "UnverifiedCertificate";
    case ErrorCode::MissingStateMarker: return "MissingStateMarker";
    case ErrorCode::MissingNoiseInput: return "MissingNoiseInput";
    case ErrorCode::UnresolvedWire: return "UnresolvedWire";
    case ErrorCode::RegionViolation: return "RegionViolation";
    case ErrorCode::UnboundInput: return "UnboundInput";
    case ErrorCode::UnsupportedBlock: return "UnsupportedBlock";
    case ErrorCode::NonfiniteSignal: return "NonfiniteSignal";
    case ErrorCode::PreconditionViolation: return "PreconditionViolation";
    case ErrorCode::Cancelled: return "Cancelled";
  }
  return "Unknown";
}

std::string Diagnostic::format() const {
  std::ostringstream os;
  if (line > 0) os << line << ':' << column << ": ";
  os << (severity == Severity::Error ? "error" : "warning") << " [" << code
     << "] " << message;
  if (!subjects.empty()) {
    os << " (";
    for (std::size_t i = 0; i < subjects.size(); ++i) {
      if (i) os << ", ";
      os << subjects[i];
    }
    os << ')';
  }
  return os.str();
}

bool has_errors(const Diagnostics& diags) {
  return std::any_of(diags.begin(), diags.end(), [](const Diagnostic& d) {
    return d.severity == Severity::Error;
  });
}

namespace {
std::string summarize(const Diagnostics& diags) {
  std::string out;
  for (const auto& d : diags) {
    if (!out.empty()) out += '\n';
    out += d.format();
  }
  return out.empty() ? "diagnostics" : out;
}
}  // namespace

DiagnosticError::DiagnosticError(Diagnostics diags)
    : std::runtime_error(summarize(diags)), diags_(std::move(diags)) {}

}  // namespace proofblocks
