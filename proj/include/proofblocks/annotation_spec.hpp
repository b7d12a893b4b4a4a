#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "proofblocks/matrix.hpp"
#include "proofblocks/model.hpp"

namespace proofblocks {

enum class AnnotationKind { Stability, L2Gain, L1PerfBound, Manual };

const char* to_string(AnnotationKind kind);

// Request for a verification-block subgraph. Which fields are required
// depends on kind; the annotator checks them.
struct AnnotationSpec {
  AnnotationKind kind = AnnotationKind::Stability;
  std::optional<Matrix> p;
  std::optional<NoiseSpec> noise;
  std::vector<PortRef> states;   // source ports of state-marked wires
  std::optional<double> alpha;
  std::optional<PortRef> w;      // noise input (NoiseSource output)
  std::optional<PortRef> y;      // performance output
  std::optional<double> theta_max;
  std::optional<double> gamma_adapt;
  std::optional<PortRef> x_tilde;
  std::optional<ModelGraph> manual_graph;
  std::map<std::string, PortRef> bindings;  // manual Inport id -> executable signal
};

}  // namespace proofblocks
