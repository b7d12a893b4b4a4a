#pragma once

#include <optional>
#include <string>
#include <vector>

#include "proofblocks/certificates.hpp"
#include "proofblocks/model.hpp"

namespace proofblocks {

struct AnalysisRequest {
  StateSpaceModel ss;
  std::optional<NoiseSpec> noise;
  std::string noise_binding;           // input id the noise spec belongs to
  std::vector<std::string> requested;  // "lyapunov", "l2gain"
};

// Linear state-space model of the executable region. States are the outputs
// of Integrator/UnitDelay blocks and the internal states of StateSpace blocks,
// ordered by block id. Inputs are Inport, NoiseSource and Constant blocks
// ordered by id. Outputs are the executable Outports (by id) unless `outputs`
// names signals explicitly.
// Throws Error(NonlinearBlock | MixedTime | AlgebraicLoop) or DiagnosticError.
StateSpaceModel extract_state_space(const ModelGraph& g,
                                    const std::vector<PortRef>& outputs = {});

// Keeps only the named inputs (B and D columns, in the given order).
StateSpaceModel select_inputs(const StateSpaceModel& ss, const std::vector<std::string>& ids);

// Position in the state vector of every component of the listed signals, or
// nullopt unless they are exactly the model's states (in any order).
std::optional<std::vector<std::size_t>> state_permutation(const StateSpaceModel& ss,
                                                          const std::vector<PortRef>& states);
// P over the listed signals from P over the state vector, and back.
Matrix to_annotation_order(const Matrix& p, const std::vector<std::size_t>& perm);
Matrix to_state_order(const Matrix& p, const std::vector<std::size_t>& perm);

// analysis-request-v1 / certificate-v1 exchange documents.
std::string export_analysis_request(const AnalysisRequest& req);
AnalysisRequest import_analysis_request(std::string_view text);
std::string export_certificate(const Certificate& cert);
// The result is always unverified with external provenance.
// Throws Error(SchemaError | SyntaxError).
Certificate import_certificate(std::string_view text);

}  // namespace proofblocks
