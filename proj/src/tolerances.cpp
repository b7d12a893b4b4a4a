#include "proofblocks/tolerances.hpp"

#include <cstdlib>
#include <string>

#include "proofblocks/errors.hpp"

namespace proofblocks {

Tolerances Tolerances::scaled(double factor) const {
  Tolerances t = *this;
  t.lu_pivot *= factor;
  t.symmetry *= factor;
  t.psd *= factor;
  t.eig_relative *= factor;
  t.lyapunov_residual *= factor;
  t.newton_step *= factor;
  t.riccati_residual *= factor;
  t.golden_step *= factor;
  t.assert_absolute *= factor;
  t.assert_rate *= factor;
  return t;
}

Tolerances Tolerances::from_environment() {
  const char* raw = std::getenv("PROOFBLOCKS_TOLERANCE_SCALE");
  if (raw == nullptr || *raw == '\0') return {};
  char* end = nullptr;
  const double factor = std::strtod(raw, &end);
  if (end == raw || *end != '\0' || !(factor > 0.0)) {
    throw Error(ErrorCode::PreconditionViolation,
                std::string("PROOFBLOCKS_TOLERANCE_SCALE must be a positive number, got '") +
                    raw + "'");
  }
  return Tolerances{}.scaled(factor);
}

void CancellationToken::check() const {
  if (cancelled()) throw Error(ErrorCode::Cancelled, "operation cancelled");
}

}  // namespace proofblocks
