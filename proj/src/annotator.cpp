#include "proofblocks/annotator.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "proofblocks/graph.hpp"
#include "proofblocks/linalg.hpp"

namespace proofblocks {

namespace {

class Builder {
 public:
  Builder(const ModelGraph& g, const char* kind, std::size_t instance)
      : graph(g), prefix_(std::string("anno.") + kind + "." + std::to_string(instance) + ".") {}

  ModelGraph graph;

  std::string add(const std::string& role, BlockKind kind) {
    std::string id = prefix_ + role;
    if (graph.find(id))
      throw Error(ErrorCode::PreconditionViolation, "annotation id '" + id + "' already exists");
    graph.blocks.push_back(Block{id, std::move(kind), Region::Annotation});
    return id;
  }

  void connect(const PortRef& src, const std::string& dst, std::size_t port = 0,
               WireMarker marker = WireMarker::Plain) {
    graph.wires.push_back(Wire{src, PortRef{dst, port}, marker});
  }
  void connect(const std::string& src, const std::string& dst, std::size_t port = 0) {
    connect(PortRef{src, 0}, dst, port);
  }

  // Combined state vector feeding a QuadraticForm.
  PortRef state_vector(const std::vector<PortRef>& states) {
    if (states.size() == 1) return states[0];
    const std::string mux = add("x", blocks::Mux{states.size()});
    for (std::size_t i = 0; i < states.size(); ++i) connect(states[i], mux, i, WireMarker::State);
    return PortRef{mux, 0};
  }

 private:
  std::string prefix_;
};

void require_verified(const Certificate& cert) {
  if (!cert.verified())
    throw Error(ErrorCode::UnverifiedCertificate,
                std::string("certificate is ") + to_string(cert.status) + ", not verified");
}

std::size_t signal_dim(const ModelGraph& g, const PortRef& r) {
  const auto dims = block_output_dims(g);
  const GraphIndex idx(g);
  auto b = idx.index_of(r.block);
  if (!b || r.port >= output_count(g.blocks[*b].kind))
    throw Error(ErrorCode::UnresolvedWire, "signal " + r.to_string() + " does not exist");
  return dims[*b];
}

void require_executable_signal(const ModelGraph& g, const PortRef& r) {
  const Block* b = g.find(r.block);
  if (!b || r.port >= output_count(b->kind))
    throw Error(ErrorCode::UnresolvedWire, "signal " + r.to_string() + " does not exist");
  if (b->region != Region::Executable)
    throw Error(ErrorCode::UnresolvedWire, "signal " + r.to_string() + " is not executable");
}

// State wires plus the QuadraticForm V(x) = x'Px.
std::string storage(Builder& b, const ModelGraph& g, const AnnotationSpec& spec, const Matrix& p) {
  const auto states = resolve_states(g, spec);
  std::size_t n = 0;
  for (const auto& s : states) n += signal_dim(g, s);
  if (p.rows() != n || p.cols() != n)
    throw Error(ErrorCode::DimensionMismatch, "P is " + std::to_string(p.rows()) + "x" +
                                                  std::to_string(p.cols()) + " but the states have dimension " +
                                                  std::to_string(n));
  const PortRef x = b.state_vector(states);
  const std::string v = b.add("v", blocks::QuadraticForm{p});
  b.connect(x, v, 0, WireMarker::State);
  return v;
}

void check_result(const ModelGraph& g) {
  auto diags = validate(g);
  if (has_errors(diags)) throw DiagnosticError(std::move(diags));
}

}  // namespace

std::vector<PortRef> resolve_states(const ModelGraph& g, const AnnotationSpec& spec) {
  std::set<PortRef> marked;
  for (const auto& w : g.wires) {
    const Block* src = g.find(w.src.block);
    if (w.marker == WireMarker::State && src && src->region == Region::Executable)
      marked.insert(w.src);
  }
  if (spec.states.empty()) {
    if (marked.empty())
      throw Error(ErrorCode::MissingStateMarker, "the model has no state-marked wires");
    return {marked.begin(), marked.end()};
  }
  for (const auto& s : spec.states)
    if (!marked.count(s))
      throw Error(ErrorCode::MissingStateMarker,
                  "signal " + s.to_string() + " has no state-marked wire");
  return spec.states;
}

double l1_bound(const Matrix& p, double theta_max, double gamma_adapt, const Tolerances& tol) {
  if (!cholesky(p, tol))
    throw Error(ErrorCode::NotPositiveDefinite, "L1 bound needs a positive definite P");
  if (!(gamma_adapt > 0.0) || !(theta_max >= 0.0))
    throw Error(ErrorCode::PreconditionViolation, "theta_max must be >= 0 and Gamma > 0");
  return std::sqrt(theta_max / (min_eig_symmetric(p, tol) * gamma_adapt));
}

AnnotationResult generate_stability_annotation(const ModelGraph& g, const AnnotationSpec& spec,
                                               const Certificate& cert, std::size_t instance,
                                               const Tolerances& tol) {
  require_verified(cert);
  const auto want = g.is_discrete() ? CertificateKind::LyapunovDiscrete
                                    : CertificateKind::LyapunovContinuous;
  if (cert.kind != want)
    throw Error(ErrorCode::PreconditionViolation,
                std::string("a ") + (g.is_discrete() ? "discrete" : "continuous") +
                    " graph needs a " + to_string(want) + " certificate, got " + to_string(cert.kind));
  Builder b(g, "stability", instance);
  const std::string v = storage(b, g, spec, cert.p);
  blocks::AssertLE0 check;
  check.tolerance = tol.assert_absolute;
  check.rate_tolerance = tol.assert_rate;
  check.label = "lyapunov";
  check.storage = v;
  if (g.is_discrete()) {
    const std::string prev = b.add("v_prev", blocks::UnitDelay{{0.0}});
    const std::string dv = b.add("dv", blocks::Sum{"+-"});
    b.connect(v, prev);
    b.connect(v, dv, 0);
    b.connect(prev, dv, 1);
    check.from_step = 1;
    const std::string a = b.add("assert", check);
    b.connect(dv, a);
  } else {
    check.check = AssertCheck::MonotoneDecreasing;
    const std::string a = b.add("assert", check);
    b.connect(v, a);
  }
  check_result(b.graph);
  return {std::move(b.graph), {}};
}

AnnotationResult generate_l2_annotation(const ModelGraph& g, const AnnotationSpec& spec,
                                        const Certificate& cert, std::size_t instance,
                                        const Tolerances& tol) {
  require_verified(cert);
  if (cert.kind != CertificateKind::L2Gain)
    throw Error(ErrorCode::PreconditionViolation, "L2 annotation needs an l2gain certificate");
  const std::optional<double> alpha = cert.alpha ? cert.alpha : spec.alpha;
  if (!alpha) throw Error(ErrorCode::PreconditionViolation, "L2 annotation needs alpha");
  if (!spec.w) throw Error(ErrorCode::MissingNoiseInput, "L2 annotation needs a noise input w");
  const Block* wb = g.find(spec.w->block);
  if (!wb || !std::holds_alternative<blocks::NoiseSource>(wb->kind))
    throw Error(ErrorCode::MissingNoiseInput,
                "w = " + spec.w->to_string() + " is not a NoiseSource output");
  if (!spec.y) throw Error(ErrorCode::UnresolvedWire, "L2 annotation needs an output y");
  require_executable_signal(g, *spec.y);

  Builder b(g, "l2gain", instance);
  const std::string v = storage(b, g, spec, cert.p);
  const std::string yy = b.add("yy", blocks::Product{ProductMode::Dot});
  b.connect(*spec.y, yy, 0);
  b.connect(*spec.y, yy, 1);
  const std::string ww = b.add("ww", blocks::Product{ProductMode::Dot});
  b.connect(*spec.w, ww, 0);
  b.connect(*spec.w, ww, 1);

  blocks::AssertLE0 check;
  check.tolerance = tol.assert_absolute;
  check.rate_tolerance = tol.assert_rate;
  check.label = "dissipation";
  check.storage = v;
  const std::string ledger = b.add("ledger", blocks::Sum{"+-+"});
  b.connect(v, ledger, 0);
  if (g.is_discrete()) {
    const double h = *g.sample_time;
    const std::string a2 = b.add("a2w", blocks::Gain{Matrix{{*alpha * *alpha * h}}});
    const std::string hy = b.add("hy", blocks::Gain{Matrix{{h}}});
    b.connect(ww, a2);
    b.connect(yy, hy);
    b.connect(hy, ledger, 1);
    b.connect(a2, ledger, 2);
    const std::string prev = b.add("ledger_prev", blocks::UnitDelay{{0.0}});
    const std::string dv = b.add("dv", blocks::Sum{"+-"});
    b.connect(ledger, prev);
    b.connect(v, dv, 0);
    b.connect(prev, dv, 1);
    check.from_step = 1;
    const std::string a = b.add("assert", check);
    b.connect(dv, a);
  } else {
    const std::string a2 = b.add("a2w", blocks::Gain{Matrix{{*alpha * *alpha}}});
    const std::string int_w = b.add("supply_w", blocks::Integrator{{0.0}});
    const std::string int_y = b.add("supply_y", blocks::Integrator{{0.0}});
    b.connect(ww, a2);
    b.connect(a2, int_w);
    b.connect(yy, int_y);
    b.connect(int_w, ledger, 1);
    b.connect(int_y, ledger, 2);
    check.check = AssertCheck::MonotoneDecreasing;
    const std::string a = b.add("assert", check);
    b.connect(ledger, a);
  }
  check_result(b.graph);
  return {std::move(b.graph), {}};
}

AnnotationResult generate_l1_bound_annotation(const ModelGraph& g, const AnnotationSpec& spec,
                                              std::size_t instance, const Tolerances& tol) {
  if (!spec.p || !spec.theta_max || !spec.gamma_adapt || !spec.x_tilde)
    throw Error(ErrorCode::PreconditionViolation,
                "l1_bound annotation needs P, theta_max, gamma_adapt and x_tilde");
  const double bound = l1_bound(*spec.p, *spec.theta_max, *spec.gamma_adapt, tol);
  require_executable_signal(g, *spec.x_tilde);
  AnnotationResult result;
  if (*spec.theta_max == 0.0) {
    result.warnings.push_back(Diagnostic{"DegenerateBound",
                                         "theta_max = 0: the assertion requires x_tilde to stay exactly 0",
                                         {}, Severity::Warning});
  }
  Builder b(g, "l1_bound", instance);
  const std::string norm = b.add("norm", blocks::InfNorm{});
  const std::string peak = b.add("peak", blocks::RunningMax{});
  const std::string limit = b.add("bound", blocks::Constant{{bound}});
  const std::string excess = b.add("excess", blocks::Sum{"+-"});
  blocks::AssertLE0 check;
  check.tolerance = tol.assert_absolute;
  check.label = "l1_bound";
  const std::string a = b.add("assert", check);
  b.connect(*spec.x_tilde, norm);
  b.connect(norm, peak);
  b.connect(peak, excess, 0);
  b.connect(limit, excess, 1);
  b.connect(excess, a);
  check_result(b.graph);
  result.graph = std::move(b.graph);
  return result;
}

AnnotationResult attach_manual_annotation(const ModelGraph& g, const AnnotationSpec& spec,
                                          std::size_t instance) {
  if (!spec.manual_graph)
    throw Error(ErrorCode::PreconditionViolation, "manual annotation needs a graph");
  const ModelGraph& m = *spec.manual_graph;
  for (const auto& blk : m.blocks)
    if (blk.region != Region::Annotation)
      throw Error(ErrorCode::RegionViolation,
                  "manual annotation block '" + blk.id + "' is not in the annotation region");

  std::set<std::string> has_consumer;
  for (const auto& w : m.wires) has_consumer.insert(w.src.block);
  for (const auto& blk : m.blocks) {
    if (output_count(blk.kind) > 0 && !has_consumer.count(blk.id))
      throw Error(ErrorCode::PreconditionViolation,
                  "manual annotation output '" + blk.id + "' does not end in an AssertLE0");
  }

  const std::string prefix = "anno.manual." + std::to_string(instance) + ".";
  ModelGraph out = g;
  std::map<std::string, PortRef> bound;
  for (const auto& blk : m.blocks) {
    if (std::holds_alternative<blocks::Inport>(blk.kind)) {
      auto it = spec.bindings.find(blk.id);
      if (it == spec.bindings.end())
        throw Error(ErrorCode::UnboundInput, "manual annotation input '" + blk.id + "' is not bound");
      require_executable_signal(g, it->second);
      bound.emplace(blk.id, it->second);
      continue;
    }
    Block copy = blk;
    copy.id = prefix + blk.id;
    if (auto* a = std::get_if<blocks::AssertLE0>(&copy.kind); a && !a->storage.empty())
      a->storage = prefix + a->storage;
    out.blocks.push_back(std::move(copy));
  }
  for (const auto& [name, target] : spec.bindings)
    if (!bound.count(name))
      throw Error(ErrorCode::UnboundInput, "binding '" + name + "' names no manual Inport");

  std::set<PortRef> state_sources;
  for (const auto& w : g.wires)
    if (w.marker == WireMarker::State) state_sources.insert(w.src);
  for (const auto& w : m.wires) {
    Wire nw = w;
    nw.dst.block = prefix + w.dst.block;
    if (auto it = bound.find(w.src.block); it != bound.end()) {
      nw.src = it->second;
      if (state_sources.count(nw.src)) nw.marker = WireMarker::State;
    } else {
      nw.src.block = prefix + w.src.block;
    }
    out.wires.push_back(std::move(nw));
  }
  check_result(out);
  return {std::move(out), {}};
}

AnnotationResult annotate(const ModelGraph& g, const std::vector<AnnotationSpec>& specs,
                          const std::vector<std::optional<Certificate>>& certs,
                          const Tolerances& tol) {
  AnnotationResult acc{g, {}};
  std::map<AnnotationKind, std::size_t> counters;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const AnnotationSpec& spec = specs[i];
    const std::size_t instance = counters[spec.kind]++;
    auto cert = [&]() -> const Certificate& {
      if (i >= certs.size() || !certs[i])
        throw Error(ErrorCode::UnverifiedCertificate,
                    std::string(to_string(spec.kind)) + " annotation " + std::to_string(i) +
                        " has no certificate");
      return *certs[i];
    };
    AnnotationResult r;
    switch (spec.kind) {
      case AnnotationKind::Stability:
        r = generate_stability_annotation(acc.graph, spec, cert(), instance, tol);
        break;
      case AnnotationKind::L2Gain:
        r = generate_l2_annotation(acc.graph, spec, cert(), instance, tol);
        break;
      case AnnotationKind::L1PerfBound:
        r = generate_l1_bound_annotation(acc.graph, spec, instance, tol);
        break;
      case AnnotationKind::Manual:
        r = attach_manual_annotation(acc.graph, spec, instance);
        break;
    }
    acc.graph = std::move(r.graph);
    acc.warnings.insert(acc.warnings.end(), r.warnings.begin(), r.warnings.end());
  }
  return acc;
}

}  // namespace proofblocks
