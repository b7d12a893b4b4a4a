#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "proofblocks/annotation_spec.hpp"
#include "proofblocks/errors.hpp"
#include "proofblocks/model.hpp"

namespace proofblocks {

struct ModelDocument {
  std::string version = "1";
  ModelGraph graph;
  std::vector<AnnotationSpec> annotations;
};

// Parses the .pbm.json format. Throws DiagnosticError whose diagnostics use
// the codes SyntaxError, SchemaError or SemanticError and carry line/column.
ModelDocument parse_model(std::string_view text);

// Canonical form: sorted keys, blocks sorted by id, 17 significant digits.
std::string print_model(const ModelDocument& doc);

// GraphViz DOT. Annotation blocks are red, state wires bold with label x(t).
std::string render_dot(const ModelDocument& doc);

// Document equality up to block/wire ordering.
bool documents_equal(const ModelDocument& a, const ModelDocument& b);

// Shared JSON helpers for the other exchange formats.
std::string format_double(double v);

}  // namespace proofblocks
