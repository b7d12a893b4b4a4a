#include "proofblocks/extraction.hpp"

#include <algorithm>
#include <set>

#include "json_io.hpp"
#include "proofblocks/errors.hpp"
#include "proofblocks/graph.hpp"
#include "proofblocks/linalg.hpp"

namespace proofblocks {

namespace {

using detail::json;

// Signal as a linear map of the state vector x and input vector u.
struct Linear {
  Matrix x;
  Matrix u;
};

Linear zero_linear(std::size_t dim, std::size_t n, std::size_t m) {
  return Linear{Matrix(dim, n), Matrix(dim, m)};
}

Linear apply(const Matrix& k, const Linear& s) { return Linear{k * s.x, k * s.u}; }

Linear scaled_rows(const std::vector<double>& k, const Linear& s) {
  Linear out = s;
  for (std::size_t r = 0; r < s.x.rows(); ++r) {
    for (std::size_t c = 0; c < s.x.cols(); ++c) out.x(r, c) *= k[r];
    for (std::size_t c = 0; c < s.u.cols(); ++c) out.u(r, c) *= k[r];
  }
  return out;
}

std::vector<SignalSlot> layout(const ModelGraph& g, const std::vector<std::size_t>& dims,
                               bool (*pick)(const BlockKind&)) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < g.blocks.size(); ++i)
    if (pick(g.blocks[i].kind)) idx.push_back(i);
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return g.blocks[a].id < g.blocks[b].id; });
  std::vector<SignalSlot> out;
  std::size_t offset = 0;
  for (std::size_t i : idx) {
    const auto* ss = std::get_if<blocks::StateSpace>(&g.blocks[i].kind);
    const std::size_t dim = ss ? ss->a.rows() : dims[i];
    out.push_back(SignalSlot{g.blocks[i].id, offset, dim});
    offset += dim;
  }
  return out;
}

bool is_state_block(const BlockKind& k) {
  return std::holds_alternative<blocks::Integrator>(k) ||
         std::holds_alternative<blocks::UnitDelay>(k) ||
         std::holds_alternative<blocks::StateSpace>(k);
}

bool is_input_block(const BlockKind& k) {
  return std::holds_alternative<blocks::Inport>(k) ||
         std::holds_alternative<blocks::NoiseSource>(k) ||
         std::holds_alternative<blocks::Constant>(k);
}

std::size_t total(const std::vector<SignalSlot>& slots) {
  return slots.empty() ? 0 : slots.back().offset + slots.back().dim;
}

const SignalSlot& slot_of(const std::vector<SignalSlot>& slots, const std::string& id) {
  for (const auto& s : slots)
    if (s.id == id) return s;
  throw Error(ErrorCode::PreconditionViolation, "no slot for '" + id + "'");
}

Matrix row_block(const Matrix& m, std::size_t r0, std::size_t rows) {
  return m.block(r0, 0, rows, m.cols());
}

json slots_json(const std::vector<SignalSlot>& slots) {
  json a = json::array();
  for (const auto& s : slots) a.push_back({{"id", s.id}, {"dim", s.dim}});
  return a;
}

Matrix matrix_or_empty(const json& j, std::size_t rows, std::size_t cols, const char* what) {
  if (j.is_array() && j.empty()) return Matrix(rows, cols);
  auto m = detail::json_to_matrix(j);
  if (!m || m->rows() != rows || m->cols() != cols)
    throw Error(ErrorCode::SchemaError, std::string("field '") + what + "' has the wrong shape");
  return *m;
}

json parse_json(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::SyntaxError, e.what());
  }
}

}  // namespace

StateSpaceModel extract_state_space(const ModelGraph& full, const std::vector<PortRef>& outputs) {
  const ModelGraph g = subgraph(full, Region::Executable);
  for (const auto& b : g.blocks) {
    if (full.is_discrete() && std::holds_alternative<blocks::Integrator>(b.kind))
      throw Error(ErrorCode::MixedTime, "Integrator '" + b.id + "' in a discrete-time graph");
    if (!full.is_discrete() && std::holds_alternative<blocks::UnitDelay>(b.kind))
      throw Error(ErrorCode::MixedTime, "UnitDelay '" + b.id + "' in a continuous-time graph");
  }
  const auto dims = block_output_dims(g);
  const auto order = evaluation_order(g);
  const GraphIndex idx(g);

  StateSpaceModel ss;
  ss.sample_time = full.sample_time;
  ss.states = layout(g, dims, is_state_block);
  ss.inputs = layout(g, dims, is_input_block);
  const std::size_t n = total(ss.states), m = total(ss.inputs);
  for (const auto& s : ss.states)
    for (std::size_t i = 0; i < s.dim; ++i)
      ss.state_names.push_back(s.id + "[" + std::to_string(i) + "]");

  std::vector<std::optional<Linear>> sig(g.blocks.size());
  auto input_of = [&](std::size_t b, std::size_t port) -> const Linear& {
    return *sig[*idx.driver(b, port)];
  };
  // Constant-valued signal: no state dependence and only Constant inputs.
  auto constant_value = [&](const Linear& s) -> std::optional<std::vector<double>> {
    if (s.x.max_abs() != 0.0) return std::nullopt;
    std::vector<double> v(s.u.rows(), 0.0);
    for (const auto& in : ss.inputs) {
      const auto* c = std::get_if<blocks::Constant>(&g.find(in.id)->kind);
      for (std::size_t r = 0; r < s.u.rows(); ++r) {
        for (std::size_t k = 0; k < in.dim; ++k) {
          const double coef = s.u(r, in.offset + k);
          if (coef == 0.0) continue;
          if (!c) return std::nullopt;
          v[r] += coef * c->value[k];
        }
      }
    }
    return v;
  };

  for (const auto& s : ss.states) {
    const std::size_t b = idx.at(s.id);
    if (const auto* blk = std::get_if<blocks::StateSpace>(&g.blocks[b].kind)) {
      if (is_feedthrough(g.blocks[b].kind)) continue;
      Linear out = zero_linear(blk->c.rows(), n, m);
      out.x.set_block(0, s.offset, blk->c);
      sig[b] = out;
    } else {
      Linear out = zero_linear(s.dim, n, m);
      for (std::size_t i = 0; i < s.dim; ++i) out.x(i, s.offset + i) = 1.0;
      sig[b] = out;
    }
  }
  for (const auto& s : ss.inputs) {
    Linear out = zero_linear(s.dim, n, m);
    for (std::size_t i = 0; i < s.dim; ++i) out.u(i, s.offset + i) = 1.0;
    sig[idx.at(s.id)] = out;
  }

  for (std::size_t b : order) {
    if (sig[b] || output_count(g.blocks[b].kind) == 0) continue;
    const Block& blk = g.blocks[b];
    const std::size_t dim = dims[b];
    auto nonlinear = [&](const std::string& why) {
      return Error(ErrorCode::NonlinearBlock, std::string(kind_name(blk.kind)) + " '" + blk.id +
                                                  "' is nonlinear: " + why);
    };
    sig[b] = std::visit(
        [&](const auto& k) -> Linear {
          using T = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<T, blocks::Gain>) {
            const Linear& in = input_of(b, 0);
            if (k.mode == GainMode::Matrix) return apply(k.gain, in);
            std::vector<double> g(dim);
            for (std::size_t i = 0; i < dim; ++i) g[i] = k.gain.size() == 1 ? k.gain(0, 0) : k.gain(i, 0);
            return scaled_rows(g, in);
          } else if constexpr (std::is_same_v<T, blocks::Sum>) {
            Linear out = zero_linear(dim, n, m);
            for (std::size_t p = 0; p < k.signs.size(); ++p) {
              const Linear& in = input_of(b, p);
              if (k.signs[p] == '+') {
                out.x += in.x;
                out.u += in.u;
              } else {
                out.x -= in.x;
                out.u -= in.u;
              }
            }
            return out;
          } else if constexpr (std::is_same_v<T, blocks::Product>) {
            const Linear& a = input_of(b, 0);
            const Linear& c = input_of(b, 1);
            const auto va = constant_value(a);
            const auto vc = constant_value(c);
            if (va && vc) throw nonlinear("product of two constant signals");
            if (!va && !vc) throw nonlinear("product of two time-varying signals");
            const std::vector<double>& v = va ? *va : *vc;
            const Linear& other = va ? c : a;
            switch (k.mode) {
              case ProductMode::Elementwise:
                return scaled_rows(v, other);
              case ProductMode::Dot:
                return apply(Matrix::column(v).transpose(), other);
              case ProductMode::Matrix:
                if (v.size() == 1) return scaled_rows(std::vector<double>(dim, v[0]), other);
                return apply(Matrix::column(v), other);
            }
            return other;
          } else if constexpr (std::is_same_v<T, blocks::StateSpace>) {
            const SignalSlot& s = slot_of(ss.states, blk.id);
            Linear out = apply(k.d, input_of(b, 0));
            Matrix cx(k.c.rows(), n);
            cx.set_block(0, s.offset, k.c);
            out.x += cx;
            return out;
          } else if constexpr (std::is_same_v<T, blocks::Mux>) {
            Linear out = zero_linear(dim, n, m);
            std::size_t row = 0;
            for (std::size_t p = 0; p < k.inputs; ++p) {
              const Linear& in = input_of(b, p);
              out.x.set_block(row, 0, in.x);
              out.u.set_block(row, 0, in.u);
              row += in.x.rows();
            }
            return out;
          } else if constexpr (std::is_same_v<T, blocks::Selector>) {
            const Linear& in = input_of(b, 0);
            Linear out = zero_linear(dim, n, m);
            for (std::size_t i = 0; i < k.indices.size(); ++i) {
              out.x.set_block(i, 0, row_block(in.x, k.indices[i], 1));
              out.u.set_block(i, 0, row_block(in.u, k.indices[i], 1));
            }
            return out;
          } else if constexpr (std::is_same_v<T, blocks::Transpose>) {
            return input_of(b, 0);
          } else {
            throw nonlinear("not representable as a linear map");
          }
        },
        blk.kind);
  }

  ss.a = Matrix(n, n);
  ss.b = Matrix(n, m);
  for (const auto& s : ss.states) {
    const std::size_t b = idx.at(s.id);
    const Linear& in = input_of(b, 0);
    if (const auto* blk = std::get_if<blocks::StateSpace>(&g.blocks[b].kind)) {
      Matrix ax = blk->b * in.x;
      for (std::size_t r = 0; r < s.dim; ++r)
        for (std::size_t c = 0; c < s.dim; ++c) ax(r, s.offset + c) += blk->a(r, c);
      ss.a.set_block(s.offset, 0, ax);
      ss.b.set_block(s.offset, 0, blk->b * in.u);
    } else {
      ss.a.set_block(s.offset, 0, in.x);
      ss.b.set_block(s.offset, 0, in.u);
    }
  }

  std::vector<std::pair<std::string, const Linear*>> outs;
  if (outputs.empty()) {
    std::vector<std::size_t> ports;
    for (std::size_t i = 0; i < g.blocks.size(); ++i)
      if (std::holds_alternative<blocks::Outport>(g.blocks[i].kind)) ports.push_back(i);
    std::sort(ports.begin(), ports.end(),
              [&](std::size_t a, std::size_t b) { return g.blocks[a].id < g.blocks[b].id; });
    for (std::size_t i : ports) outs.emplace_back(g.blocks[i].id, &input_of(i, 0));
  } else {
    for (const auto& r : outputs) {
      auto b = idx.index_of(r.block);
      if (!b || r.port != 0 || !sig[*b])
        throw Error(ErrorCode::UnresolvedWire,
                    "output signal " + r.to_string() + " is not an executable signal");
      outs.emplace_back(r.block, &*sig[*b]);
    }
  }
  std::size_t p = 0;
  for (const auto& [id, s] : outs) {
    ss.outputs.push_back(SignalSlot{id, p, s->x.rows()});
    p += s->x.rows();
  }
  ss.c = Matrix(p, n);
  ss.d = Matrix(p, m);
  for (std::size_t i = 0; i < outs.size(); ++i) {
    ss.c.set_block(ss.outputs[i].offset, 0, outs[i].second->x);
    ss.d.set_block(ss.outputs[i].offset, 0, outs[i].second->u);
  }
  return ss;
}

StateSpaceModel select_inputs(const StateSpaceModel& ss, const std::vector<std::string>& ids) {
  StateSpaceModel out = ss;
  out.inputs.clear();
  std::size_t m = 0;
  for (const auto& id : ids) {
    const SignalSlot* s = ss.input(id);
    if (!s) throw Error(ErrorCode::UnresolvedWire, "'" + id + "' is not an input of the model");
    out.inputs.push_back(SignalSlot{id, m, s->dim});
    m += s->dim;
  }
  out.b = Matrix(ss.n(), m);
  out.d = Matrix(ss.p(), m);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const SignalSlot& from = *ss.input(ids[i]);
    const SignalSlot& to = out.inputs[i];
    out.b.set_block(0, to.offset, ss.b.block(0, from.offset, ss.n(), from.dim));
    out.d.set_block(0, to.offset, ss.d.block(0, from.offset, ss.p(), from.dim));
  }
  return out;
}

std::string export_analysis_request(const AnalysisRequest& req) {
  const StateSpaceModel& ss = req.ss;
  json j;
  j["schema"] = "analysis-request-v1";
  j["A"] = detail::matrix_to_json(ss.a);
  j["B"] = detail::matrix_to_json(ss.b);
  j["C"] = detail::matrix_to_json(ss.c);
  j["D"] = detail::matrix_to_json(ss.d);
  j["time"] = ss.is_discrete() ? json{{"domain", "discrete"}, {"h", *ss.sample_time}}
                               : json{{"domain", "continuous"}};
  j["state_names"] = ss.state_names;
  j["inputs"] = slots_json(ss.inputs);
  j["outputs"] = slots_json(ss.outputs);
  if (req.noise) {
    j["noise"] = {{"binding", req.noise_binding},
                  {"kind", to_string(req.noise->kind)},
                  {"bound", req.noise->bound}};
  } else {
    j["noise"] = nullptr;
  }
  j["requested"] = req.requested;
  return detail::write_canonical_json(j);
}

AnalysisRequest import_analysis_request(std::string_view text) {
  const json j = parse_json(text);
  if (!j.is_object() || j.value("schema", "") != "analysis-request-v1")
    throw Error(ErrorCode::SchemaError, "not an analysis-request-v1 document");
  AnalysisRequest req;
  StateSpaceModel& ss = req.ss;
  try {
    std::size_t m = 0, p = 0;
    for (const auto& s : j.at("inputs")) {
      ss.inputs.push_back(SignalSlot{s.at("id").get<std::string>(), m, s.at("dim").get<std::size_t>()});
      m += ss.inputs.back().dim;
    }
    for (const auto& s : j.at("outputs")) {
      ss.outputs.push_back(SignalSlot{s.at("id").get<std::string>(), p, s.at("dim").get<std::size_t>()});
      p += ss.outputs.back().dim;
    }
    ss.state_names = j.at("state_names").get<std::vector<std::string>>();
    const std::size_t n = ss.state_names.size();
    ss.a = matrix_or_empty(j.at("A"), n, n, "A");
    ss.b = matrix_or_empty(j.at("B"), n, m, "B");
    ss.c = matrix_or_empty(j.at("C"), p, n, "C");
    ss.d = matrix_or_empty(j.at("D"), p, m, "D");
    if (j.at("time").at("domain") == "discrete") ss.sample_time = j["time"].at("h").get<double>();
    if (!j.at("noise").is_null()) {
      const json& nz = j["noise"];
      const std::string kind = nz.at("kind");
      NoiseSpec spec{NoiseKind::Zero, nz.at("bound").get<double>()};
      if (kind == "unit_peak_uniform") spec.kind = NoiseKind::UnitPeakUniform;
      else if (kind == "bounded_power") spec.kind = NoiseKind::BoundedPower;
      else if (kind != "zero") throw Error(ErrorCode::SchemaError, "unknown noise kind '" + kind + "'");
      req.noise = spec;
      req.noise_binding = nz.at("binding");
    }
    req.requested = j.at("requested").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaError, e.what());
  }
  return req;
}

std::string export_certificate(const Certificate& cert) {
  json j;
  j["schema"] = "certificate-v1";
  j["kind"] = to_string(cert.kind);
  j["P"] = detail::matrix_to_json(cert.p);
  if (cert.alpha) j["alpha"] = *cert.alpha;
  j["residual"] = cert.residual;
  j["status"] = to_string(cert.status);
  j["origin"] = to_string(cert.provenance);
  return detail::write_canonical_json(j);
}

Certificate import_certificate(std::string_view text) {
  const json j = parse_json(text);
  if (!j.is_object()) throw Error(ErrorCode::SchemaError, "certificate must be a JSON object");
  static const char* allowed[] = {"schema", "kind", "P", "alpha", "residual",
                                  "status", "origin", "provenance"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::none_of(std::begin(allowed), std::end(allowed),
                     [&](const char* a) { return it.key() == a; }))
      throw Error(ErrorCode::SchemaError, "unknown key '" + it.key() + "'");
  if (j.contains("schema") && j["schema"] != "certificate-v1")
    throw Error(ErrorCode::SchemaError, "unsupported schema");
  if (!j.contains("kind") || !j["kind"].is_string())
    throw Error(ErrorCode::SchemaError, "missing certificate kind");
  Certificate cert;
  const std::string kind = j["kind"];
  if (kind == "lyapunov" || kind == "lyapunov_continuous") cert.kind = CertificateKind::LyapunovContinuous;
  else if (kind == "lyapunov_discrete") cert.kind = CertificateKind::LyapunovDiscrete;
  else if (kind == "l2gain") cert.kind = CertificateKind::L2Gain;
  else throw Error(ErrorCode::SchemaError, "unknown certificate kind '" + kind + "'");
  if (!j.contains("P")) throw Error(ErrorCode::SchemaError, "missing P");
  auto p = detail::json_to_matrix(j["P"]);
  if (!p || !p->is_square()) throw Error(ErrorCode::SchemaError, "P must be a square matrix");
  cert.p = *p;
  if (j.contains("alpha")) {
    if (!j["alpha"].is_number()) throw Error(ErrorCode::SchemaError, "alpha must be a number");
    cert.alpha = j["alpha"].get<double>();
  } else if (cert.kind == CertificateKind::L2Gain) {
    throw Error(ErrorCode::SchemaError, "l2gain certificate needs alpha");
  }
  if (j.contains("residual") && j["residual"].is_number()) cert.residual = j["residual"].get<double>();
  cert.status = CertificateStatus::Unverified;
  cert.provenance = Provenance::External;
  return cert;
}

std::optional<std::vector<std::size_t>> state_permutation(const StateSpaceModel& ss,
                                                          const std::vector<PortRef>& states) {
  std::vector<std::size_t> perm;
  for (const auto& s : states) {
    auto slot = std::find_if(ss.states.begin(), ss.states.end(),
                             [&](const SignalSlot& x) { return x.id == s.block; });
    if (slot == ss.states.end() || s.port != 0) return std::nullopt;
    for (std::size_t j = 0; j < slot->dim; ++j) perm.push_back(slot->offset + j);
  }
  std::set<std::size_t> unique(perm.begin(), perm.end());
  if (perm.size() != ss.n() || unique.size() != perm.size()) return std::nullopt;
  return perm;
}

Matrix to_annotation_order(const Matrix& p, const std::vector<std::size_t>& perm) {
  Matrix r(perm.size(), perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t j = 0; j < perm.size(); ++j) r(i, j) = p(perm[i], perm[j]);
  return r;
}

Matrix to_state_order(const Matrix& p, const std::vector<std::size_t>& perm) {
  Matrix r(perm.size(), perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t j = 0; j < perm.size(); ++j) r(perm[i], perm[j]) = p(i, j);
  return r;
}

}  // namespace proofblocks
