#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "proofblocks/annotation_spec.hpp"
#include "proofblocks/certificates.hpp"
#include "proofblocks/errors.hpp"
#include "proofblocks/model.hpp"
#include "proofblocks/tolerances.hpp"

namespace proofblocks {

// Exact zero-order-hold discretization. Throws PreconditionViolation for a
// discrete model or h <= 0.
StateSpaceModel zoh_discretize(const StateSpaceModel& ss, double h);

enum class CertificatePath { RecomputedDiscrete, ContinuousCarriedRuntimeOnly };
const char* to_string(CertificatePath path);

struct ProofRecord {
  std::size_t spec = 0;
  AnnotationKind kind = AnnotationKind::Manual;
  std::string prefix;  // id prefix of the annotation blocks
  CertificatePath path = CertificatePath::ContinuousCarriedRuntimeOnly;
  std::optional<Certificate> discrete_cert;  // P in annotation state order
  std::vector<PortRef> states;
  std::optional<double> level;  // V(x0) (1 + 1e-9) from declared initial states
};

struct DiscretizationReport {
  double h = 0.0;
  Matrix ad, bd;       // empty when the executable region is nonlinear
  bool exact = true;   // false: forward Euler
  CertificatePath certificate_path = CertificatePath::ContinuousCarriedRuntimeOnly;
  std::optional<Certificate> discrete_cert;
  std::vector<ProofRecord> proofs;
  Diagnostics warnings;
};

struct DiscretizeOptions {
  Matrix q;  // discrete Lyapunov right-hand side; empty = identity
};

// Turns an annotated continuous graph into a discrete one at step h.
// Linear executable regions use ZOH; integrator ids are kept and become
// UnitDelays fed by a [Ad Bd] gain. Nonlinear regions fall back to forward
// Euler with a warning. Lyapunov annotations are re-derived from a discrete
// certificate; L2 annotations keep P when the discrete dissipation LMI holds;
// everything else is carried for runtime checking with Euler accumulators.
// specs/certs are the arguments that produced the annotated graph.
std::pair<ModelGraph, DiscretizationReport> discretize_with_proof(
    const ModelGraph& annotated, const std::vector<AnnotationSpec>& specs,
    const std::vector<std::optional<Certificate>>& certs, double h,
    const DiscretizeOptions& options = {}, const Tolerances& tol = {});

// Report for an annotated graph that is already discrete: verified Stability
// and L2Gain certificates stand as they are, everything else is carried.
// Throws PreconditionViolation for a continuous graph.
DiscretizationReport discrete_report(const ModelGraph& annotated,
                                     const std::vector<AnnotationSpec>& specs,
                                     const std::vector<std::optional<Certificate>>& certs);

enum class CodeTarget { CLike, Dataflow };
const char* to_string(CodeTarget target);
// Throws Error(PreconditionViolation) for an unknown name.
CodeTarget code_target_from_string(const std::string& name);

// Variable names of every executable block output component, as used by
// both targets.
std::map<std::string, std::vector<std::string>> code_variable_names(const ModelGraph& gd);

// Annotated source text. level overrides the ellipsoid level of every
// quadratic invariant. Throws UnsupportedBlock, PreconditionViolation.
std::string emit_code(const ModelGraph& gd, const DiscretizationReport& report, CodeTarget target,
                      std::optional<double> level = std::nullopt);

// Conventional output file name, e.g. "<model>.lus.txt".
std::string code_file_name(const ModelGraph& g, CodeTarget target);

}  // namespace proofblocks
