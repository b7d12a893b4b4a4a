#pragma once

#include <optional>
#include <span>
#include <string>

#include "json.hpp"
#include "proofblocks/matrix.hpp"

namespace proofblocks::detail {

using json = nlohmann::json;

// Pretty printer with sorted keys, inline numeric arrays and doubles at 17
// significant digits. Ends with a newline.
std::string write_canonical_json(const json& j);

json matrix_to_json(const Matrix& m);
json vector_to_json(std::span<const double> v);
// Nested row arrays, rectangular and non-empty; nullopt otherwise.
std::optional<Matrix> json_to_matrix(const json& j);

}  // namespace proofblocks::detail
