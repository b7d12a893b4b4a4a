#include "json_io.hpp"

#include "proofblocks/frontend.hpp"

namespace proofblocks::detail {

namespace {

bool is_inline(const json& j) {
  if (j.is_primitive()) return true;
  for (const auto& v : j) {
    if (v.is_object()) return false;
    if (v.is_array() && !is_inline(v)) return false;
  }
  return true;
}

void write(std::string& out, const json& j, int indent) {
  switch (j.type()) {
    case json::value_t::number_float:
      out += format_double(j.get<double>());
      return;
    case json::value_t::array:
    case json::value_t::object: {
      const bool obj = j.is_object();
      if (j.empty()) {
        out += obj ? "{}" : "[]";
        return;
      }
      const bool flat = is_inline(j);
      const std::string pad(static_cast<std::size_t>(indent + 2), ' ');
      out += obj ? '{' : '[';
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += flat ? ", " : ",";
        first = false;
        if (!flat) out += "\n" + pad;
        if (obj) out += json(it.key()).dump() + ": ";
        write(out, it.value(), indent + 2);
      }
      if (!flat) out += "\n" + std::string(static_cast<std::size_t>(indent), ' ');
      out += obj ? '}' : ']';
      return;
    }
    default:
      out += j.dump(-1, ' ', false, json::error_handler_t::replace);
  }
}

}  // namespace

std::string write_canonical_json(const json& j) {
  std::string out;
  write(out, j, 0);
  out += '\n';
  return out;
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_to_json(std::span<const double> v) {
  json a = json::array();
  for (double x : v) a.push_back(x);
  return a;
}

std::optional<Matrix> json_to_matrix(const json& j) {
  if (!j.is_array() || j.empty() || !j[0].is_array() || j[0].empty()) return std::nullopt;
  const std::size_t cols = j[0].size();
  Matrix m(j.size(), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols) return std::nullopt;
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) return std::nullopt;
      m(r, c) = j[r][c].get<double>();
    }
  }
  return m;
}

}  // namespace proofblocks::detail
