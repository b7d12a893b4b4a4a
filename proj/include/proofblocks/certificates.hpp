#pragma once

#include <optional>
#include <string>
#include <vector>

#include "proofblocks/matrix.hpp"
#include "proofblocks/model.hpp"
#include "proofblocks/tolerances.hpp"

namespace proofblocks {

struct SignalSlot {
  std::string id;  // block id
  std::size_t offset = 0;
  std::size_t dim = 0;

  bool operator==(const SignalSlot&) const = default;
};

struct StateSpaceModel {
  Matrix a, b, c, d;
  std::vector<std::string> state_names;  // "<block>[<i>]"
  std::vector<SignalSlot> states;
  std::vector<SignalSlot> inputs;
  std::vector<SignalSlot> outputs;
  std::optional<double> sample_time;  // empty = continuous

  bool is_discrete() const { return sample_time.has_value(); }
  std::size_t n() const { return a.rows(); }
  std::size_t m() const { return b.cols(); }
  std::size_t p() const { return c.rows(); }
  const SignalSlot* input(const std::string& id) const;
};

enum class CertificateKind { LyapunovContinuous, LyapunovDiscrete, L2Gain };
enum class CertificateStatus { Unverified, Verified, Refuted };
enum class Provenance { Internal, External };

const char* to_string(CertificateKind kind);
const char* to_string(CertificateStatus status);
const char* to_string(Provenance provenance);

struct Certificate {
  CertificateKind kind = CertificateKind::LyapunovContinuous;
  Matrix p;
  std::optional<double> alpha;
  double residual = 0.0;
  CertificateStatus status = CertificateStatus::Unverified;
  Provenance provenance = Provenance::Internal;

  bool verified() const { return status == CertificateStatus::Verified; }
};

// A'P + PA = -Q by Kronecker vectorization. Throws SingularOperator.
Certificate solve_lyapunov_continuous(const Matrix& a, const Matrix& q,
                                      const Tolerances& tol = {});
// Ad'P Ad - P = -Q. Throws SingularOperator.
Certificate solve_lyapunov_discrete(const Matrix& ad, const Matrix& q,
                                    const Tolerances& tol = {});

// sup_w sigma_max(C (jwI - A)^-1 B) for a continuous, strictly proper,
// Hurwitz system. Throws NotStable.
double hinf_norm_estimate(const StateSpaceModel& ss, const Tolerances& tol = {},
                          const CancellationToken* cancel = nullptr);

// Stabilizing solution of A'P + PA + g^-2 PBB'P + C'C = 0 by Newton-Kleinman.
// Throws InfeasibleGain, NoConvergence, PreconditionViolation (D != 0).
// residuals, when given, receives the Riccati residual of every iterate.
Certificate bounded_real_certificate(const StateSpaceModel& ss, double gamma,
                                     const Tolerances& tol = {},
                                     const CancellationToken* cancel = nullptr,
                                     std::vector<double>* residuals = nullptr);

// Discrete storage for the ledger V(x+) - V(x) + h y'y - a^2 h w'w <= 0.
// Throws InfeasibleGain.
Certificate discrete_bounded_real_certificate(const StateSpaceModel& ss, double alpha,
                                              const Tolerances& tol = {});

// Rechecks the defining inequality and sets status. Continuous or discrete
// form follows ss. Throws DimensionMismatch.
Certificate verify_certificate(const StateSpaceModel& ss, const Certificate& cert,
                               const Tolerances& tol = {});

// Residual of A'P + PA + g^-2 PBB'P + C'C.
double riccati_residual(const StateSpaceModel& ss, const Matrix& p, double gamma);

}  // namespace proofblocks
