#include "proofblocks/graph.hpp"

#include <algorithm>
#include <functional>
#include <queue>
#include <set>
#include <tuple>

namespace proofblocks {

namespace {

Diagnostic diag(std::string code, std::string message, std::vector<std::string> subjects = {}) {
  return Diagnostic{std::move(code), std::move(message), std::move(subjects)};
}

std::string dims_str(std::size_t a, std::size_t b) {
  return std::to_string(a) + " vs " + std::to_string(b);
}

void check_params(const Block& b, Diagnostics& out) {
  auto bad = [&](const std::string& what) {
    out.push_back(diag("InvalidParameter", std::string(kind_name(b.kind)) + " '" + b.id + "': " + what,
                       {b.id}));
  };
  std::visit(
      [&](const auto& k) {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, blocks::Inport>) {
          if (k.dim == 0) bad("dim must be >= 1");
        } else if constexpr (std::is_same_v<T, blocks::Constant>) {
          if (k.value.empty()) bad("value must be non-empty");
        } else if constexpr (std::is_same_v<T, blocks::Gain>) {
          if (k.gain.empty()) bad("gain must be non-empty");
          if (k.mode == GainMode::Elementwise && k.gain.cols() != 1)
            bad("elementwise gain must be a scalar or a flat vector");
        } else if constexpr (std::is_same_v<T, blocks::Sum>) {
          if (k.signs.size() < 2) bad("signs must have at least two entries");
          if (k.signs.find_first_not_of("+-") != std::string::npos)
            bad("signs may only contain '+' and '-'");
        } else if constexpr (std::is_same_v<T, blocks::Integrator> ||
                             std::is_same_v<T, blocks::UnitDelay>) {
          if (k.initial.empty()) bad("initial must be non-empty");
        } else if constexpr (std::is_same_v<T, blocks::StateSpace>) {
          const std::size_t n = k.a.rows();
          if (n == 0 || !k.a.is_square()) bad("A must be square and non-empty");
          else if (k.b.rows() != n || k.c.cols() != n || k.d.rows() != k.c.rows() ||
                   k.d.cols() != k.b.cols() || k.b.cols() == 0 || k.c.rows() == 0)
            bad("A, B, C, D shapes are inconsistent");
        } else if constexpr (std::is_same_v<T, blocks::NoiseSource>) {
          if (k.dim == 0) bad("dim must be >= 1");
          if (!(k.noise.bound >= 0.0)) bad("noise bound must be >= 0");
          if (k.noise.kind == NoiseKind::Zero && k.noise.bound != 0.0)
            bad("zero noise must have bound 0");
        } else if constexpr (std::is_same_v<T, blocks::PolyFun>) {
          if (k.coefficients.empty()) bad("coefficients must be non-empty");
        } else if constexpr (std::is_same_v<T, blocks::QuadraticForm>) {
          if (k.p.empty() || !k.p.is_square()) bad("P must be square and non-empty");
        } else if constexpr (std::is_same_v<T, blocks::AssertLE0>) {
          if (!(k.tolerance >= 0.0) || !(k.rate_tolerance >= 0.0))
            bad("tolerances must be >= 0");
        } else if constexpr (std::is_same_v<T, blocks::Mux>) {
          if (k.inputs == 0) bad("inputs must be >= 1");
        } else if constexpr (std::is_same_v<T, blocks::Selector>) {
          if (k.indices.empty()) bad("indices must be non-empty");
        }
      },
      b.kind);
}

// Output dims (0 = unknown) plus dimension diagnostics.
std::vector<std::size_t> infer_impl(const ModelGraph& g, const GraphIndex& idx, Diagnostics& out) {
  const std::size_t n = g.blocks.size();
  std::vector<std::size_t> dim(n, 0);
  auto in_dim = [&](std::size_t b, std::size_t port) -> std::size_t {
    auto d = idx.driver(b, port);
    return d ? dim[*d] : 0;
  };

  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t b = 0; b < n; ++b) {
      if (dim[b] != 0 || output_count(g.blocks[b].kind) == 0) continue;
      const std::size_t nin = input_count(g.blocks[b].kind);
      std::size_t d = std::visit(
          [&](const auto& k) -> std::size_t {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, blocks::Inport>) return k.dim;
            else if constexpr (std::is_same_v<T, blocks::Constant>) return k.value.size();
            else if constexpr (std::is_same_v<T, blocks::NoiseSource>) return k.dim;
            else if constexpr (std::is_same_v<T, blocks::Integrator> ||
                               std::is_same_v<T, blocks::UnitDelay>) return k.initial.size();
            else if constexpr (std::is_same_v<T, blocks::StateSpace>) return k.c.rows();
            else if constexpr (std::is_same_v<T, blocks::Gain>)
              return k.mode == GainMode::Matrix ? k.gain.rows() : in_dim(b, 0);
            else if constexpr (std::is_same_v<T, blocks::QuadraticForm> ||
                               std::is_same_v<T, blocks::InfNorm>) return 1;
            else if constexpr (std::is_same_v<T, blocks::Selector>) return k.indices.size();
            else if constexpr (std::is_same_v<T, blocks::Sum>) {
              for (std::size_t p = 0; p < nin; ++p)
                if (in_dim(b, p)) return in_dim(b, p);
              return 0;
            } else if constexpr (std::is_same_v<T, blocks::Product>) {
              if (k.mode == ProductMode::Dot) return 1;
              const std::size_t a = in_dim(b, 0), c = in_dim(b, 1);
              if (k.mode == ProductMode::Elementwise) return a ? a : c;
              return (a && c) ? std::max(a, c) : 0;
            } else if constexpr (std::is_same_v<T, blocks::Mux>) {
              std::size_t total = 0;
              for (std::size_t p = 0; p < nin; ++p) {
                if (!in_dim(b, p)) return 0;
                total += in_dim(b, p);
              }
              return total;
            } else {
              return in_dim(b, 0);
            }
          },
          g.blocks[b].kind);
      if (d != 0) {
        dim[b] = d;
        changed = true;
      }
    }
  }

  for (std::size_t b = 0; b < n; ++b) {
    const Block& blk = g.blocks[b];
    if (output_count(blk.kind) > 0 && dim[b] == 0) {
      out.push_back(diag("Unresolved", "cannot determine output dimension of '" + blk.id + "'",
                         {blk.id}));
      continue;
    }
    const std::size_t nin = input_count(blk.kind);
    std::vector<std::size_t> ins(nin);
    bool known = true;
    for (std::size_t p = 0; p < nin; ++p) {
      ins[p] = in_dim(b, p);
      known = known && ins[p] != 0;
    }
    if (!known) {
      out.push_back(diag("Unresolved", "cannot determine input dimension of '" + blk.id + "'",
                         {blk.id}));
      continue;
    }
    auto mismatch = [&](std::size_t a, std::size_t c, const std::string& what) {
      out.push_back(diag("DimensionMismatch",
                         std::string(kind_name(blk.kind)) + " '" + blk.id + "': " + what + " (" +
                             dims_str(a, c) + ")",
                         {blk.id}));
    };
    std::visit(
        [&](const auto& k) {
          using T = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<T, blocks::Integrator> ||
                        std::is_same_v<T, blocks::UnitDelay>) {
            if (ins[0] != k.initial.size()) mismatch(ins[0], k.initial.size(), "input vs initial");
          } else if constexpr (std::is_same_v<T, blocks::StateSpace>) {
            if (ins[0] != k.b.cols()) mismatch(ins[0], k.b.cols(), "input vs B columns");
          } else if constexpr (std::is_same_v<T, blocks::Gain>) {
            if (k.mode == GainMode::Matrix && ins[0] != k.gain.cols())
              mismatch(ins[0], k.gain.cols(), "input vs gain columns");
            if (k.mode == GainMode::Elementwise && k.gain.size() != 1 && ins[0] != k.gain.rows())
              mismatch(ins[0], k.gain.rows(), "input vs elementwise gain length");
          } else if constexpr (std::is_same_v<T, blocks::Sum>) {
            for (std::size_t p = 1; p < ins.size(); ++p)
              if (ins[p] != ins[0]) {
                mismatch(ins[0], ins[p], "inputs 0 and " + std::to_string(p));
                break;
              }
          } else if constexpr (std::is_same_v<T, blocks::Product>) {
            if (k.mode == ProductMode::Matrix) {
              if (ins[0] != 1 && ins[1] != 1)
                mismatch(ins[0], ins[1], "matrix product needs a scalar operand");
            } else if (ins[0] != ins[1]) {
              mismatch(ins[0], ins[1], "operands");
            }
          } else if constexpr (std::is_same_v<T, blocks::QuadraticForm>) {
            if (ins[0] != k.p.rows()) mismatch(ins[0], k.p.rows(), "input vs P");
          } else if constexpr (std::is_same_v<T, blocks::AssertLE0>) {
            if (ins[0] != 1)
              out.push_back(diag("AssertDimension",
                                 "AssertLE0 '" + blk.id + "' input must be scalar, got dim " +
                                     std::to_string(ins[0]),
                                 {blk.id}));
          } else if constexpr (std::is_same_v<T, blocks::Selector>) {
            for (std::size_t i : k.indices)
              if (i >= ins[0]) {
                mismatch(i, ins[0], "selector index vs input");
                break;
              }
          }
        },
        blk.kind);
  }
  return dim;
}

bool has_duplicates(const ModelGraph& g, Diagnostics& out) {
  std::set<std::string> seen;
  bool dup = false;
  for (const auto& b : g.blocks) {
    if (!seen.insert(b.id).second) {
      out.push_back(diag("DuplicateId", "duplicate block id '" + b.id + "'", {b.id}));
      dup = true;
    }
  }
  return dup;
}

}  // namespace

GraphIndex::GraphIndex(const ModelGraph& g) : graph_(&g) {
  for (std::size_t i = 0; i < g.blocks.size(); ++i) ids_.emplace(g.blocks[i].id, i);
  inputs_.resize(g.blocks.size());
  outputs_.resize(g.blocks.size());
  for (std::size_t i = 0; i < g.blocks.size(); ++i)
    inputs_[i].resize(input_count(g.blocks[i].kind));
  for (std::size_t w = 0; w < g.wires.size(); ++w) {
    const Wire& wire = g.wires[w];
    auto s = ids_.find(wire.src.block);
    auto d = ids_.find(wire.dst.block);
    if (s != ids_.end()) outputs_[s->second].push_back(w);
    if (d != ids_.end() && wire.dst.port < inputs_[d->second].size() &&
        !inputs_[d->second][wire.dst.port]) {
      inputs_[d->second][wire.dst.port] = w;
    }
  }
}

std::optional<std::size_t> GraphIndex::index_of(const std::string& id) const {
  auto it = ids_.find(id);
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

std::size_t GraphIndex::at(const std::string& id) const {
  auto it = ids_.find(id);
  if (it == ids_.end()) throw Error(ErrorCode::UnresolvedWire, "unknown block '" + id + "'");
  return it->second;
}

std::optional<std::size_t> GraphIndex::driver(std::size_t block, std::size_t port) const {
  if (port >= inputs_[block].size() || !inputs_[block][port]) return std::nullopt;
  return index_of(graph_->wires[*inputs_[block][port]].src.block);
}

std::vector<std::vector<std::string>> algebraic_loops(const ModelGraph& g) {
  const GraphIndex idx(g);
  const std::size_t n = g.blocks.size();
  // Edge u -> v when v's output depends on u within the same step.
  std::vector<std::vector<std::size_t>> adj(n);
  for (std::size_t v = 0; v < n; ++v) {
    if (!is_feedthrough(g.blocks[v].kind)) continue;
    for (std::size_t p = 0; p < idx.inputs(v).size(); ++p)
      if (auto u = idx.driver(v, p)) adj[*u].push_back(v);
  }
  // Tarjan's SCC.
  std::vector<int> index(n, -1), low(n, 0);
  std::vector<bool> on_stack(n, false);
  std::vector<std::size_t> stack;
  std::vector<std::vector<std::string>> loops;
  int counter = 0;
  std::function<void(std::size_t)> connect = [&](std::size_t v) {
    index[v] = low[v] = counter++;
    stack.push_back(v);
    on_stack[v] = true;
    for (std::size_t w : adj[v]) {
      if (index[w] < 0) {
        connect(w);
        low[v] = std::min(low[v], low[w]);
      } else if (on_stack[w]) {
        low[v] = std::min(low[v], index[w]);
      }
    }
    if (low[v] == index[v]) {
      std::vector<std::string> comp;
      std::size_t w;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack[w] = false;
        comp.push_back(g.blocks[w].id);
      } while (w != v);
      const bool self_loop = std::find(adj[v].begin(), adj[v].end(), v) != adj[v].end();
      if (comp.size() > 1 || self_loop) {
        std::sort(comp.begin(), comp.end());
        loops.push_back(std::move(comp));
      }
    }
  };
  for (std::size_t v = 0; v < n; ++v)
    if (index[v] < 0) connect(v);
  std::sort(loops.begin(), loops.end());
  return loops;
}

Diagnostics validate(const ModelGraph& g) {
  Diagnostics out;
  const bool dup = has_duplicates(g, out);

  if (g.sample_time && !(*g.sample_time > 0.0))
    out.push_back(diag("InvalidParameter", "sample_time must be > 0"));

  for (const auto& b : g.blocks) {
    check_params(b, out);
    const bool annotation_only = std::holds_alternative<blocks::QuadraticForm>(b.kind) ||
                                 std::holds_alternative<blocks::AssertLE0>(b.kind) ||
                                 std::holds_alternative<blocks::RunningMax>(b.kind) ||
                                 std::holds_alternative<blocks::InfNorm>(b.kind);
    if (annotation_only && b.region != Region::Annotation) {
      out.push_back(diag("RegionViolation",
                         std::string(kind_name(b.kind)) + " '" + b.id +
                             "' may only appear in the annotation region",
                         {b.id}));
    }
    if (g.is_discrete() && std::holds_alternative<blocks::Integrator>(b.kind))
      out.push_back(diag("MixedTime", "Integrator '" + b.id + "' in a discrete-time graph", {b.id}));
    if (!g.is_discrete() && std::holds_alternative<blocks::UnitDelay>(b.kind))
      out.push_back(
          diag("MixedTime", "UnitDelay '" + b.id + "' in a continuous-time graph", {b.id}));
  }
  if (dup) return out;

  for (const auto& b : g.blocks) {
    if (const auto* a = std::get_if<blocks::AssertLE0>(&b.kind); a && !a->storage.empty()) {
      const Block* s = g.find(a->storage);
      if (!s || !std::holds_alternative<blocks::QuadraticForm>(s->kind))
        out.push_back(diag("InvalidParameter",
                           "AssertLE0 '" + b.id + "' storage '" + a->storage +
                               "' is not a QuadraticForm block",
                           {b.id, a->storage}));
    }
  }

  std::map<std::string, const Block*> by_id;
  for (const auto& b : g.blocks) by_id[b.id] = &b;
  std::set<PortRef> driven;
  std::set<std::string> has_output_wire;
  bool wiring_ok = true;
  for (std::size_t w = 0; w < g.wires.size(); ++w) {
    const Wire& wire = g.wires[w];
    const std::string label = "wire " + wire.src.to_string() + " -> " + wire.dst.to_string();
    auto s = by_id.find(wire.src.block);
    auto d = by_id.find(wire.dst.block);
    if (s == by_id.end()) {
      out.push_back(diag("UnknownBlock", label + ": unknown source block '" + wire.src.block + "'",
                         {wire.src.block}));
      wiring_ok = false;
    }
    if (d == by_id.end()) {
      out.push_back(diag("UnknownBlock",
                         label + ": unknown destination block '" + wire.dst.block + "'",
                         {wire.dst.block}));
      wiring_ok = false;
    }
    if (s == by_id.end() || d == by_id.end()) continue;
    if (wire.src.port >= output_count(s->second->kind)) {
      out.push_back(diag("BadPort", label + ": source has no output port " +
                                        std::to_string(wire.src.port),
                         {wire.src.block}));
      wiring_ok = false;
    }
    if (wire.dst.port >= input_count(d->second->kind)) {
      out.push_back(diag("BadPort", label + ": destination has no input port " +
                                        std::to_string(wire.dst.port),
                         {wire.dst.block}));
      wiring_ok = false;
    }
    if (!driven.insert(wire.dst).second) {
      out.push_back(diag("MultipleDrivers", label + ": input port already driven",
                         {wire.dst.block}));
      wiring_ok = false;
    }
    has_output_wire.insert(wire.src.block);
    if (s->second->region == Region::Annotation && d->second->region == Region::Executable) {
      out.push_back(diag("RegionViolation",
                         label + ": annotation block feeds an executable block",
                         {wire.src.block, wire.dst.block}));
    }
  }
  for (const auto& b : g.blocks) {
    for (std::size_t p = 0; p < input_count(b.kind); ++p) {
      if (!driven.count(PortRef{b.id, p})) {
        out.push_back(diag("UnconnectedInput",
                           "input " + std::to_string(p) + " of '" + b.id + "' is not connected",
                           {b.id}));
        wiring_ok = false;
      }
    }
    if (std::holds_alternative<blocks::Inport>(b.kind) && b.region == Region::Executable &&
        !has_output_wire.count(b.id)) {
      out.push_back(diag("Unreachable", "Inport '" + b.id + "' drives nothing", {b.id}));
    }
  }
  if (!wiring_ok) return out;

  for (auto& loop : algebraic_loops(g)) {
    std::string cycle;
    for (const auto& id : loop) cycle += (cycle.empty() ? "" : " -> ") + id;
    out.push_back(diag("AlgebraicLoop", "cycle without a delay or integrator: " + cycle, loop));
  }
  if (has_errors(out)) return out;

  const GraphIndex idx(g);
  infer_impl(g, idx, out);
  return out;
}

std::vector<std::size_t> block_output_dims(const ModelGraph& g) {
  Diagnostics diags;
  const GraphIndex idx(g);
  auto dims = infer_impl(g, idx, diags);
  if (has_errors(diags)) throw DiagnosticError(std::move(diags));
  return dims;
}

ModelGraph infer_dimensions(const ModelGraph& g) {
  const auto dims = block_output_dims(g);
  const GraphIndex idx(g);
  ModelGraph out = g;
  for (auto& w : out.wires) w.dim = dims[idx.at(w.src.block)];
  return out;
}

ModelGraph subgraph(const ModelGraph& g, Region region) {
  std::vector<std::size_t> dims;
  try {
    dims = block_output_dims(g);
  } catch (const DiagnosticError&) {
  }
  const GraphIndex idx(g);
  ModelGraph out;
  out.sample_time = g.sample_time;
  out.metadata = g.metadata;
  for (const auto& b : g.blocks)
    if (b.region == region) out.blocks.push_back(b);

  std::map<PortRef, std::string> boundary;
  for (const auto& w : g.wires) {
    const Block* s = g.find(w.src.block);
    const Block* d = g.find(w.dst.block);
    if (!s || !d || d->region != region) continue;
    if (s->region == region) {
      out.wires.push_back(w);
      continue;
    }
    auto it = boundary.find(w.src);
    if (it == boundary.end()) {
      const std::string id = "boundary." + w.src.block + "." + std::to_string(w.src.port);
      std::size_t dim = w.dim;
      if (dim == 0 && !dims.empty()) dim = dims[idx.at(w.src.block)];
      out.blocks.push_back(Block{id, blocks::Inport{dim ? dim : 1}, region});
      it = boundary.emplace(w.src, id).first;
    }
    Wire nw = w;
    nw.src = PortRef{it->second, 0};
    out.wires.push_back(std::move(nw));
  }
  return out;
}

bool structurally_equal(const ModelGraph& a, const ModelGraph& b) {
  if (a.sample_time != b.sample_time || a.metadata != b.metadata) return false;
  if (a.blocks.size() != b.blocks.size() || a.wires.size() != b.wires.size()) return false;
  auto sorted_blocks = [](const ModelGraph& g) {
    std::vector<const Block*> v;
    for (const auto& blk : g.blocks) v.push_back(&blk);
    std::sort(v.begin(), v.end(), [](const Block* x, const Block* y) { return x->id < y->id; });
    return v;
  };
  auto ba = sorted_blocks(a), bb = sorted_blocks(b);
  for (std::size_t i = 0; i < ba.size(); ++i)
    if (!(*ba[i] == *bb[i])) return false;
  auto sorted_wires = [](const ModelGraph& g) {
    std::vector<std::tuple<PortRef, PortRef, WireMarker>> v;
    for (const auto& w : g.wires) v.emplace_back(w.src, w.dst, w.marker);
    std::sort(v.begin(), v.end());
    return v;
  };
  return sorted_wires(a) == sorted_wires(b);
}

std::vector<std::size_t> evaluation_order(const ModelGraph& g) {
  const GraphIndex idx(g);
  const std::size_t n = g.blocks.size();
  std::vector<std::vector<std::size_t>> adj(n);
  std::vector<std::size_t> indegree(n, 0);
  for (std::size_t v = 0; v < n; ++v) {
    if (!is_feedthrough(g.blocks[v].kind)) continue;
    for (std::size_t p = 0; p < idx.inputs(v).size(); ++p) {
      if (auto u = idx.driver(v, p)) {
        adj[*u].push_back(v);
        ++indegree[v];
      }
    }
  }
  auto by_id = [&](std::size_t x, std::size_t y) { return g.blocks[x].id > g.blocks[y].id; };
  std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(by_id)> ready(by_id);
  for (std::size_t v = 0; v < n; ++v)
    if (indegree[v] == 0) ready.push(v);
  std::vector<std::size_t> order;
  while (!ready.empty()) {
    const std::size_t u = ready.top();
    ready.pop();
    order.push_back(u);
    for (std::size_t v : adj[u])
      if (--indegree[v] == 0) ready.push(v);
  }
  if (order.size() != n) {
    std::string ids;
    for (const auto& loop : algebraic_loops(g))
      for (const auto& id : loop) ids += (ids.empty() ? "" : ", ") + id;
    throw Error(ErrorCode::AlgebraicLoop, "cycle without a delay or integrator: " + ids);
  }
  return order;
}

}  // namespace proofblocks
