#pragma once

#include <map>
#include <optional>
#include <vector>

#include "proofblocks/annotation_spec.hpp"
#include "proofblocks/certificates.hpp"
#include "proofblocks/model.hpp"
#include "proofblocks/tolerances.hpp"

namespace proofblocks {

struct CertifyOptions {
  Matrix q;                   // Lyapunov right-hand side; empty = identity
  double gamma_margin = 1.01;  // alpha = margin * H-inf estimate when a spec has none
  // External certificates to re-verify, by spec index. P in annotation state order.
  std::map<std::size_t, Certificate> imported;
};

// Certificate for every Stability and L2Gain spec (nullopt for the others),
// with P in annotation state order. A spec that carries P, or an imported
// certificate, is verified rather than solved; the result may be refuted.
// Throws NotStable, SingularOperator, InfeasibleGain, NonlinearBlock and
// PreconditionViolation when the spec states are not the model's states.
std::vector<std::optional<Certificate>> certify_annotations(const ModelGraph& g,
                                                            const std::vector<AnnotationSpec>& specs,
                                                            const CertifyOptions& options = {},
                                                            const Tolerances& tol = {});

}  // namespace proofblocks
