#pragma once

#include <optional>
#include <vector>

#include "proofblocks/annotation_spec.hpp"
#include "proofblocks/certificates.hpp"
#include "proofblocks/errors.hpp"
#include "proofblocks/model.hpp"
#include "proofblocks/tolerances.hpp"

namespace proofblocks {

struct AnnotationResult {
  ModelGraph graph;
  Diagnostics warnings;
};

// Each generator adds annotation-region blocks named
// anno.<kind>.<instance>.<role> and leaves the executable region untouched.

// QuadraticForm(P) on the state wires and an AssertLE0 on V (continuous:
// monotone_decreasing; discrete: V(k) - V(k-1) through a UnitDelay).
// Throws UnverifiedCertificate, MissingStateMarker.
AnnotationResult generate_stability_annotation(const ModelGraph& g, const AnnotationSpec& spec,
                                               const Certificate& cert, std::size_t instance = 0,
                                               const Tolerances& tol = {});

// Dissipation ledger V - a^2 Int w'w + Int y'y (continuous, monotone) or the
// per-step V(k) - V(k-1) + h y'y - a^2 h w'w (discrete). Alpha comes from the
// certificate when present. Throws as above plus MissingNoiseInput.
AnnotationResult generate_l2_annotation(const ModelGraph& g, const AnnotationSpec& spec,
                                        const Certificate& cert, std::size_t instance = 0,
                                        const Tolerances& tol = {});

// Running max of |x~|_inf against sqrt(theta_max / (lambda_min(P) Gamma)).
// Throws NotPositiveDefinite.
AnnotationResult generate_l1_bound_annotation(const ModelGraph& g, const AnnotationSpec& spec,
                                              std::size_t instance = 0,
                                              const Tolerances& tol = {});

// Grafts a user-written annotation graph, binding its Inports to executable
// signals. Throws RegionViolation, UnboundInput.
AnnotationResult attach_manual_annotation(const ModelGraph& g, const AnnotationSpec& spec,
                                          std::size_t instance = 0);

// Expands every spec in order. certs[i] is used by Stability and L2Gain specs.
AnnotationResult annotate(const ModelGraph& g, const std::vector<AnnotationSpec>& specs,
                          const std::vector<std::optional<Certificate>>& certs,
                          const Tolerances& tol = {});

// Value of the L1 bound constant.
double l1_bound(const Matrix& p, double theta_max, double gamma_adapt, const Tolerances& tol = {});

// Source ports of the state wires used by a spec (explicit list, or every
// state-marked wire source in port order). Throws MissingStateMarker.
std::vector<PortRef> resolve_states(const ModelGraph& g, const AnnotationSpec& spec);

}  // namespace proofblocks
