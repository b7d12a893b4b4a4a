#include "proofblocks/backend.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <set>
#include <sstream>

#include "proofblocks/annotator.hpp"
#include "proofblocks/extraction.hpp"
#include "proofblocks/frontend.hpp"
#include "proofblocks/graph.hpp"
#include "proofblocks/linalg.hpp"

namespace proofblocks {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool starts_with(const std::string& s, const std::string& p) { return s.rfind(p, 0) == 0; }

void remove_prefixed(ModelGraph& g, const std::string& prefix) {
  std::erase_if(g.blocks, [&](const Block& b) { return starts_with(b.id, prefix); });
  std::erase_if(g.wires, [&](const Wire& w) {
    return starts_with(w.src.block, prefix) || starts_with(w.dst.block, prefix);
  });
}

std::string fresh_id(const ModelGraph& g, const std::string& id) {
  if (g.find(id))
    throw Error(ErrorCode::PreconditionViolation, "generated block id '" + id + "' is taken");
  return id;
}

// Integrator -> UnitDelay with acc(k+1) = acc(k) + h u(k).
void to_euler(ModelGraph& g, const std::string& id, double h) {
  Block* b = g.find(id);
  const Region region = b->region;
  const auto initial = std::get<blocks::Integrator>(b->kind).initial;
  b->kind = blocks::UnitDelay{initial};
  const std::string gain = fresh_id(g, id + ".euler_h");
  const std::string next = fresh_id(g, id + ".euler_next");
  for (auto& w : g.wires)
    if (w.dst.block == id) w.dst = PortRef{gain, 0};
  g.blocks.push_back({gain, blocks::Gain{Matrix{{h}}}, region});
  g.blocks.push_back({next, blocks::Sum{"++"}, region});
  g.wires.push_back({{id, 0}, {next, 0}});
  g.wires.push_back({{gain, 0}, {next, 1}});
  g.wires.push_back({{next, 0}, {id, 0}});
}

bool is_pure(const BlockKind& k) {
  return std::holds_alternative<blocks::Gain>(k) || std::holds_alternative<blocks::Sum>(k) ||
         std::holds_alternative<blocks::Product>(k) || std::holds_alternative<blocks::Mux>(k) ||
         std::holds_alternative<blocks::Selector>(k) || std::holds_alternative<blocks::PolyFun>(k) ||
         std::holds_alternative<blocks::Transpose>(k) || std::holds_alternative<blocks::InfNorm>(k);
}

// Drops executable computations nobody reads.
void prune_dead(ModelGraph& g) {
  for (bool changed = true; changed;) {
    changed = false;
    std::set<std::string> read;
    for (const auto& w : g.wires) read.insert(w.src.block);
    for (std::size_t i = 0; i < g.blocks.size(); ++i) {
      const Block& b = g.blocks[i];
      if (b.region != Region::Executable || !is_pure(b.kind) || read.count(b.id)) continue;
      const std::string id = b.id;
      std::erase_if(g.wires, [&](const Wire& w) { return w.dst.block == id; });
      g.blocks.erase(g.blocks.begin() + static_cast<std::ptrdiff_t>(i));
      changed = true;
      break;
    }
  }
}

std::optional<double> initial_level(const ModelGraph& gd, const std::vector<PortRef>& states,
                                    const Matrix& p) {
  std::vector<double> x0;
  for (const auto& s : states) {
    const Block* b = gd.find(s.block);
    const auto* d = b ? std::get_if<blocks::UnitDelay>(&b->kind) : nullptr;
    if (!d) return std::nullopt;
    x0.insert(x0.end(), d->initial.begin(), d->initial.end());
  }
  if (x0.size() != p.rows()) return std::nullopt;
  double v = 0.0;
  for (std::size_t i = 0; i < x0.size(); ++i)
    for (std::size_t j = 0; j < x0.size(); ++j) v += x0[i] * p(i, j) * x0[j];
  return v * (1.0 + 1e-9);
}

Diagnostic warning(const std::string& code, const std::string& message,
                   std::vector<std::string> subjects = {}) {
  return Diagnostic{code, message, std::move(subjects), Severity::Warning};
}

}  // namespace

StateSpaceModel zoh_discretize(const StateSpaceModel& ss, double h) {
  if (ss.is_discrete())
    throw Error(ErrorCode::PreconditionViolation, "model is already discrete");
  if (!(h > 0.0) || !std::isfinite(h))
    throw Error(ErrorCode::PreconditionViolation, "step h must be positive and finite");
  const std::size_t n = ss.n(), m = ss.m();
  Matrix aug(n + m, n + m);
  aug.set_block(0, 0, ss.a * h);
  if (m > 0) aug.set_block(0, n, ss.b * h);
  const Matrix e = expm(aug);
  StateSpaceModel out = ss;
  out.a = e.block(0, 0, n, n);
  out.b = m > 0 ? e.block(0, n, n, m) : Matrix(n, 0);
  out.sample_time = h;
  return out;
}

const char* to_string(CertificatePath path) {
  return path == CertificatePath::RecomputedDiscrete ? "recomputed_discrete"
                                                     : "continuous_carried_runtime_only";
}

std::pair<ModelGraph, DiscretizationReport> discretize_with_proof(
    const ModelGraph& annotated, const std::vector<AnnotationSpec>& specs,
    const std::vector<std::optional<Certificate>>& certs, double h,
    const DiscretizeOptions& options, const Tolerances& tol) {
  if (annotated.is_discrete())
    throw Error(ErrorCode::PreconditionViolation, "graph is already discrete");
  if (!(h > 0.0) || !std::isfinite(h))
    throw Error(ErrorCode::PreconditionViolation, "step h must be positive and finite");
  if (specs.empty()) throw Error(ErrorCode::PreconditionViolation, "graph has no annotations");
  auto diags = validate(annotated);
  if (has_errors(diags)) throw DiagnosticError(std::move(diags));

  const ModelGraph exec = subgraph(annotated, Region::Executable);
  for (const auto& b : exec.blocks)
    if (std::holds_alternative<blocks::StateSpace>(b.kind))
      throw Error(ErrorCode::UnsupportedBlock,
                  "StateSpace block '" + b.id + "' in a continuous graph cannot be discretized");

  DiscretizationReport rep;
  rep.h = h;
  std::optional<StateSpaceModel> ss, ssd;
  try {
    ss = extract_state_space(exec);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NonlinearBlock) throw;
    rep.exact = false;
    rep.warnings.push_back(warning("NonlinearBlock",
                                   std::string(e.what()) +
                                       "; executable region discretized by forward Euler, all "
                                       "annotations are runtime-checked only"));
  }

  ModelGraph gd = annotated;
  gd.sample_time = h;
  if (ss) {
    ssd = zoh_discretize(*ss, h);
    rep.ad = ssd->a;
    rep.bd = ssd->b;
    if (ss->n() > 0) {
      std::set<std::string> state_ids;
      for (const auto& s : ss->states) state_ids.insert(s.id);
      std::erase_if(gd.wires, [&](const Wire& w) { return state_ids.count(w.dst.block) > 0; });
      for (const auto& s : ss->states) {
        Block* b = gd.find(s.id);
        b->kind = blocks::UnitDelay{std::get<blocks::Integrator>(b->kind).initial};
      }
      std::vector<std::string> sources;
      for (const auto& s : ss->states) sources.push_back(s.id);
      for (const auto& s : ss->inputs) sources.push_back(s.id);
      PortRef stacked{sources[0], 0};
      if (sources.size() > 1) {
        const std::string mux = fresh_id(gd, "zoh.in");
        gd.blocks.push_back({mux, blocks::Mux{sources.size()}});
        for (std::size_t i = 0; i < sources.size(); ++i)
          gd.wires.push_back({{sources[i], 0}, {mux, i}});
        stacked = PortRef{mux, 0};
      }
      Matrix abd(ss->n(), ss->n() + ss->m());
      abd.set_block(0, 0, ssd->a);
      if (ss->m() > 0) abd.set_block(0, ss->n(), ssd->b);
      const std::string step = fresh_id(gd, "zoh.step");
      gd.blocks.push_back({step, blocks::Gain{abd, GainMode::Matrix}});
      gd.wires.push_back({stacked, {step, 0}});
      for (const auto& s : ss->states) {
        std::vector<std::size_t> idx(s.dim);
        for (std::size_t j = 0; j < s.dim; ++j) idx[j] = s.offset + j;
        const std::string sel = fresh_id(gd, "zoh.next." + s.id);
        gd.blocks.push_back({sel, blocks::Selector{idx}});
        gd.wires.push_back({{step, 0}, {sel, 0}});
        gd.wires.push_back({{sel, 0}, {s.id, 0}});
      }
    }
  } else {
    for (const auto& b : exec.blocks)
      if (std::holds_alternative<blocks::Integrator>(b.kind)) to_euler(gd, b.id, h);
  }

  // Decide every proof path first, then rebuild.
  struct Regen {
    std::size_t record;
    Certificate cert;
  };
  std::vector<Regen> regen;
  std::map<AnnotationKind, std::size_t> counters;
  std::vector<std::size_t> instances;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const AnnotationSpec& spec = specs[i];
    const std::size_t instance = counters[spec.kind]++;
    instances.push_back(instance);
    ProofRecord rec;
    rec.spec = i;
    rec.kind = spec.kind;
    rec.prefix = std::string("anno.") + to_string(spec.kind) + "." + std::to_string(instance) + ".";
    auto carry = [&](const std::string& why) {
      rec.path = CertificatePath::ContinuousCarriedRuntimeOnly;
      rep.warnings.push_back(warning("CarriedCertificate",
                                     rec.prefix + ": " + why + "; runtime-checked only"));
    };
    std::optional<std::vector<std::size_t>> perm;
    if (spec.kind == AnnotationKind::Stability || spec.kind == AnnotationKind::L2Gain) {
      rec.states = resolve_states(annotated, spec);
      if (ss) perm = state_permutation(*ss, rec.states);
    }
    const Certificate* cert = i < certs.size() && certs[i] ? &*certs[i] : nullptr;

    if (!rep.exact) {
      carry("nonlinear executable region");
    } else if (spec.kind == AnnotationKind::L1PerfBound || spec.kind == AnnotationKind::Manual) {
      carry(std::string(to_string(spec.kind)) + " annotations have no discrete certificate");
    } else if (!perm) {
      carry("annotation states are not the extracted state vector");
    } else if (spec.kind == AnnotationKind::Stability) {
      Matrix q = options.q.empty() ? Matrix::identity(ss->n()) : options.q;
      std::optional<Certificate> dc;
      try {
        dc = verify_certificate(*ssd, solve_lyapunov_discrete(ssd->a, q, tol), tol);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::SingularOperator) throw;
      }
      if (dc && dc->verified()) {
        Certificate ac = *dc;
        ac.p = to_annotation_order(dc->p, *perm);
        rec.path = CertificatePath::RecomputedDiscrete;
        rec.discrete_cert = ac;
        regen.push_back({rep.proofs.size(), ac});
      } else {
        carry("no verified discrete Lyapunov certificate for Ad");
      }
    } else if (!cert || !cert->verified() || cert->kind != CertificateKind::L2Gain) {
      carry("no verified l2gain certificate");
    } else {
      const auto alpha = cert->alpha ? cert->alpha : spec.alpha;
      StateSpaceModel ssy = select_inputs(extract_state_space(exec, {*spec.y}), {spec.w->block});
      const StateSpaceModel ssyd = zoh_discretize(ssy, h);
      Certificate cand{CertificateKind::L2Gain, to_state_order(cert->p, *perm), alpha};
      cand = verify_certificate(ssyd, cand, tol);
      if (cand.verified()) {
        Certificate ac = cand;
        ac.p = cert->p;
        rec.path = CertificatePath::RecomputedDiscrete;
        rec.discrete_cert = ac;
        regen.push_back({rep.proofs.size(), ac});
      } else {
        carry("discrete dissipation inequality with continuous P fails at h = " + format_double(h));
      }
    }
    rep.proofs.push_back(std::move(rec));
  }

  for (const auto& r : regen) remove_prefixed(gd, rep.proofs[r.record].prefix);
  std::vector<std::string> annotation_integrators;
  for (const auto& b : gd.blocks)
    if (b.region == Region::Annotation && std::holds_alternative<blocks::Integrator>(b.kind))
      annotation_integrators.push_back(b.id);
  for (const auto& id : annotation_integrators) to_euler(gd, id, h);
  for (const auto& r : regen) {
    ProofRecord& rec = rep.proofs[r.record];
    const AnnotationSpec& spec = specs[rec.spec];
    gd = rec.kind == AnnotationKind::Stability
             ? generate_stability_annotation(gd, spec, r.cert, instances[rec.spec], tol).graph
             : generate_l2_annotation(gd, spec, r.cert, instances[rec.spec], tol).graph;
    rec.level = initial_level(gd, rec.states, r.cert.p);
  }
  prune_dead(gd);

  const bool all = std::all_of(rep.proofs.begin(), rep.proofs.end(), [](const ProofRecord& r) {
    return r.path == CertificatePath::RecomputedDiscrete;
  });
  rep.certificate_path =
      all ? CertificatePath::RecomputedDiscrete : CertificatePath::ContinuousCarriedRuntimeOnly;
  for (const auto& r : rep.proofs)
    if (r.discrete_cert) {
      rep.discrete_cert = r.discrete_cert;
      break;
    }

  diags = validate(gd);
  if (has_errors(diags)) throw DiagnosticError(std::move(diags));
  return {std::move(gd), std::move(rep)};
}

DiscretizationReport discrete_report(const ModelGraph& annotated,
                                     const std::vector<AnnotationSpec>& specs,
                                     const std::vector<std::optional<Certificate>>& certs) {
  if (!annotated.is_discrete())
    throw Error(ErrorCode::PreconditionViolation, "graph is continuous");
  DiscretizationReport rep;
  rep.h = *annotated.sample_time;
  std::map<AnnotationKind, std::size_t> counters;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const AnnotationSpec& spec = specs[i];
    ProofRecord rec;
    rec.spec = i;
    rec.kind = spec.kind;
    rec.prefix = std::string("anno.") + to_string(spec.kind) + "." +
                 std::to_string(counters[spec.kind]++) + ".";
    const Certificate* cert = i < certs.size() && certs[i] ? &*certs[i] : nullptr;
    if (cert && cert->verified() &&
        (spec.kind == AnnotationKind::Stability || spec.kind == AnnotationKind::L2Gain)) {
      rec.path = CertificatePath::RecomputedDiscrete;
      rec.discrete_cert = *cert;
      rec.states = resolve_states(annotated, spec);
      rec.level = initial_level(annotated, rec.states, cert->p);
    } else {
      rep.warnings.push_back(warning("CarriedCertificate",
                                     rec.prefix + ": no discrete certificate; runtime-checked only"));
    }
    rep.proofs.push_back(std::move(rec));
  }
  const bool all = std::all_of(rep.proofs.begin(), rep.proofs.end(), [](const ProofRecord& r) {
    return r.path == CertificatePath::RecomputedDiscrete;
  });
  rep.certificate_path =
      all ? CertificatePath::RecomputedDiscrete : CertificatePath::ContinuousCarriedRuntimeOnly;
  for (const auto& r : rep.proofs)
    if (r.discrete_cert) {
      rep.discrete_cert = r.discrete_cert;
      break;
    }
  return rep;
}

// ---- code emission ---------------------------------------------------------

const char* to_string(CodeTarget target) {
  return target == CodeTarget::CLike ? "c_like" : "dataflow";
}

CodeTarget code_target_from_string(const std::string& name) {
  if (name == "c_like") return CodeTarget::CLike;
  if (name == "dataflow") return CodeTarget::Dataflow;
  throw Error(ErrorCode::PreconditionViolation, "unknown code target '" + name + "'");
}

std::string code_file_name(const ModelGraph& g, CodeTarget target) {
  return g.name() + (target == CodeTarget::CLike ? ".step.c.txt" : ".lus.txt");
}

namespace {

const std::set<std::string>& reserved_words() {
  static const std::set<std::string> words{
      "abs",      "and",     "assert",   "auto",  "bool",   "break",   "case",    "char",
      "const",    "continue","current",  "default","do",    "double",  "else",    "enum",
      "extern",   "false",   "fby",      "float", "for",    "function","goto",    "if",
      "in",       "inline",  "int",      "let",   "level",  "long",    "max",     "merge",
      "min",      "node",    "not",      "or",    "out",    "pre",     "real",    "register",
      "restrict", "return",  "returns",  "s",     "short",  "signed",  "sizeof",  "static",
      "steps",    "struct",  "switch",   "tel",   "then",   "true",    "type",    "typedef",
      "union",    "unsigned","var",      "void",  "volatile","when",   "while",   "k",
      "fabs",     "fmax",    "HUGE_VAL"};
  return words;
}

std::string sanitize(const std::string& id) {
  std::string s;
  for (char c : id) s += std::isalnum(static_cast<unsigned char>(c)) || c == '_' ? c : '_';
  if (s.empty() || std::isdigit(static_cast<unsigned char>(s[0]))) s = "v_" + s;
  if (reserved_words().count(s)) s += "_";
  return s;
}

class Names {
 public:
  std::string claim(const std::string& base) {
    std::string s = sanitize(base);
    if (taken_.insert(s).second) return s;
    for (int i = 2;; ++i) {
      std::string t = s + "_" + std::to_string(i);
      if (taken_.insert(t).second) return t;
    }
  }

 private:
  std::set<std::string> taken_;
};

std::string lit(double v) {
  const std::string s = format_double(v);
  return v < 0.0 || (v == 0.0 && std::signbit(v)) ? "(" + s + ")" : s;
}

struct Layout {
  const ModelGraph& g;
  GraphIndex idx;
  std::vector<std::size_t> dims;
  std::map<std::string, std::vector<std::string>> vars;     // block outputs
  std::map<std::string, std::vector<std::string>> outport;  // Outport variables
  std::map<std::string, std::vector<std::string>> ss_state, ss_next;

  explicit Layout(const ModelGraph& graph) : g(graph), idx(graph), dims(block_output_dims(graph)) {
    Names names;
    std::vector<std::size_t> order(g.blocks.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const auto& x = g.blocks[a];
      const auto& y = g.blocks[b];
      if (x.region != y.region) return x.region == Region::Executable;
      return x.id < y.id;
    });
    for (std::size_t b : order) {
      const Block& blk = g.blocks[b];
      std::size_t d = dims[b];
      auto* target = &vars[blk.id];
      if (std::holds_alternative<blocks::Outport>(blk.kind)) {
        vars.erase(blk.id);
        target = &outport[blk.id];
        d = dims[*idx.driver(b, 0)];
      }
      for (std::size_t i = 0; i < d; ++i)
        target->push_back(names.claim(d == 1 ? blk.id : blk.id + "_" + std::to_string(i)));
      if (const auto* k = std::get_if<blocks::StateSpace>(&blk.kind)) {
        for (std::size_t j = 0; j < k->a.rows(); ++j) {
          ss_state[blk.id].push_back(names.claim(blk.id + "_s" + std::to_string(j)));
          ss_next[blk.id].push_back(names.claim(blk.id + "_sn" + std::to_string(j)));
        }
      }
    }
  }

  const std::vector<std::string>& in(std::size_t b, std::size_t port) const {
    return vars.at(g.blocks[*idx.driver(b, port)].id);
  }
};

struct Dialect {
  const char* abs;
  const char* max;
  // Reads a block's stored value (delay, running max, state-space state).
  std::function<std::string(const std::string& var)> state;
};

std::string dot_terms(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::string s = a[0] + " * " + b[0];
  for (std::size_t i = 1; i < a.size(); ++i) s += " + " + a[i] + " * " + b[i];
  return s;
}

// Expression of output component i; mirrors the simulator's arithmetic order.
std::optional<std::string> component_expr(const Layout& L, std::size_t b, std::size_t i,
                                          const Dialect& d) {
  const Block& blk = L.g.blocks[b];
  return std::visit(
      overloaded{
          [&](const blocks::Constant& k) -> std::optional<std::string> { return lit(k.value[i]); },
          [&](const blocks::Gain& k) -> std::optional<std::string> {
            const auto& u = L.in(b, 0);
            if (k.mode == GainMode::Matrix) {
              std::string s = lit(k.gain(i, 0)) + " * " + u[0];
              for (std::size_t j = 1; j < u.size(); ++j) s += " + " + lit(k.gain(i, j)) + " * " + u[j];
              return s;
            }
            return lit(k.gain.size() == 1 ? k.gain(0, 0) : k.gain(i, 0)) + " * " + u[i];
          },
          [&](const blocks::Sum& k) -> std::optional<std::string> {
            std::string s = (k.signs[0] == '-' ? "-" : "") + L.in(b, 0)[i];
            for (std::size_t p = 1; p < k.signs.size(); ++p)
              s += std::string(k.signs[p] == '-' ? " - " : " + ") + L.in(b, p)[i];
            return s;
          },
          [&](const blocks::Product& k) -> std::optional<std::string> {
            const auto& a = L.in(b, 0);
            const auto& c = L.in(b, 1);
            switch (k.mode) {
              case ProductMode::Dot: return dot_terms(a, c);
              case ProductMode::Elementwise: return a[i] + " * " + c[i];
              case ProductMode::Matrix:
                return a.size() == 1 ? a[0] + " * " + c[i] : a[i] + " * " + c[0];
            }
            return std::nullopt;
          },
          [&](const blocks::PolyFun& k) -> std::optional<std::string> {
            if (k.coefficients.empty()) return std::string("0.0");
            const std::string& u = L.in(b, 0)[i];
            std::string r = lit(k.coefficients.back());
            for (std::size_t c = k.coefficients.size(); c-- > 1;)
              r = "(" + lit(k.coefficients[c - 1]) + " + " + u + " * " + r + ")";
            return r;
          },
          [&](const blocks::StateSpace& k) -> std::optional<std::string> {
            const auto& s = L.ss_state.at(blk.id);
            std::vector<std::string> terms;
            for (std::size_t j = 0; j < s.size(); ++j)
              terms.push_back(lit(k.c(i, j)) + " * " + d.state(s[j]));
            if (k.d.max_abs() != 0.0)
              for (std::size_t j = 0; j < k.d.cols(); ++j)
                terms.push_back(lit(k.d(i, j)) + " * " + L.in(b, 0)[j]);
            if (terms.empty()) return std::string("0.0");
            std::string r = terms[0];
            for (std::size_t j = 1; j < terms.size(); ++j) r += " + " + terms[j];
            return r;
          },
          [&](const blocks::Transpose&) -> std::optional<std::string> { return L.in(b, 0)[i]; },
          [&](const blocks::Mux& k) -> std::optional<std::string> {
            std::size_t o = i;
            for (std::size_t p = 0; p < k.inputs; ++p) {
              const auto& u = L.in(b, p);
              if (o < u.size()) return u[o];
              o -= u.size();
            }
            return std::nullopt;
          },
          [&](const blocks::Selector& k) -> std::optional<std::string> {
            return L.in(b, 0)[k.indices[i]];
          },
          [&](const blocks::InfNorm&) -> std::optional<std::string> {
            std::string r = "0.0";
            for (const auto& u : L.in(b, 0))
              r = std::string(d.max) + "(" + r + ", " + d.abs + "(" + u + "))";
            return r;
          },
          [&](const blocks::RunningMax&) -> std::optional<std::string> {
            const std::string& self = L.vars.at(blk.id)[i];
            return std::string(d.max) + "(" + d.state(self) + ", " + L.in(b, 0)[i] + ")";
          },
          [&](const blocks::QuadraticForm& k) -> std::optional<std::string> {
            const auto& x = L.in(b, 0);
            std::string r;
            for (std::size_t r0 = 0; r0 < x.size(); ++r0) {
              std::string row = lit(k.p(r0, 0)) + " * " + x[0];
              for (std::size_t c = 1; c < x.size(); ++c) row += " + " + lit(k.p(r0, c)) + " * " + x[c];
              r += (r0 ? " + " : "") + x[r0] + " * (" + row + ")";
            }
            return r;
          },
          [&](const auto&) -> std::optional<std::string> { return std::nullopt; },
      },
      blk.kind);
}

std::string quadratic(const Matrix& p, const std::vector<std::string>& x) {
  std::string r;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (!r.empty()) r += " + ";
      r += lit(p(i, j)) + " * " + x[i] + " * " + x[j];
    }
  return r;
}

std::string contract_key(const blocks::AssertLE0& a) {
  if (a.label == "lyapunov") return "decrease";
  if (a.label == "dissipation") return "dissipation";
  return a.label.empty() ? "assert" : sanitize(a.label);
}

const ProofRecord* record_of(const DiscretizationReport& rep, const std::string& id) {
  for (const auto& r : rep.proofs)
    if (starts_with(id, r.prefix)) return &r;
  return nullptr;
}

std::vector<std::string> state_vars(const Layout& L, const std::vector<PortRef>& states) {
  std::vector<std::string> x;
  for (const auto& s : states) {
    auto it = L.vars.find(s.block);
    if (it == L.vars.end()) return {};
    x.insert(x.end(), it->second.begin(), it->second.end());
  }
  return x;
}

void check_codegen(const ModelGraph& gd) {
  if (!gd.is_discrete())
    throw Error(ErrorCode::PreconditionViolation, "code emission needs a discrete graph");
  auto diags = validate(gd);
  if (has_errors(diags)) throw DiagnosticError(std::move(diags));
}

std::vector<std::size_t> block_order(const ModelGraph& gd, Region region) {
  // Executable blocks are ordered on their own so that removing the
  // annotation region leaves their order unchanged.
  const ModelGraph sub = subgraph(gd, region);
  std::vector<std::size_t> out;
  for (std::size_t s : evaluation_order(sub)) {
    const std::string& id = sub.blocks[s].id;
    if (starts_with(id, "boundary.")) continue;
    for (std::size_t b = 0; b < gd.blocks.size(); ++b)
      if (gd.blocks[b].id == id) out.push_back(b);
  }
  return out;
}

void header(std::ostringstream& os, const char* c, const ModelGraph& gd,
            const DiscretizationReport& rep) {
  os << c << " " << gd.name() << ": generated by proofblocks\n";
  os << c << " sample time " << format_double(*gd.sample_time) << " s, "
     << (rep.exact ? "zero-order hold" : "forward Euler") << "\n";
  for (const auto& r : rep.proofs) {
    os << c << " proof " << r.prefix.substr(0, r.prefix.size() - 1) << ": " << to_string(r.path);
    if (r.discrete_cert)
      os << " (" << to_string(r.discrete_cert->kind) << ", "
         << to_string(r.discrete_cert->status) << ")";
    else
      os << " (RUNTIME-CHECKED ONLY)";
    os << "\n";
  }
}

std::string emit_dataflow(const ModelGraph& gd, const DiscretizationReport& rep,
                          std::optional<double> level) {
  const Layout L(gd);
  const Dialect d{"abs", "max", [](const std::string& v) { return "pre(" + v + ")"; }};
  std::vector<std::string> inputs, outputs, locals;
  std::vector<std::size_t> exec = block_order(gd, Region::Executable);
  std::vector<std::size_t> by_id = exec;
  std::sort(by_id.begin(), by_id.end(),
            [&](std::size_t a, std::size_t b) { return gd.blocks[a].id < gd.blocks[b].id; });
  for (std::size_t b : by_id) {
    const Block& blk = gd.blocks[b];
    if (std::holds_alternative<blocks::Inport>(blk.kind) ||
        std::holds_alternative<blocks::NoiseSource>(blk.kind)) {
      for (const auto& v : L.vars.at(blk.id)) inputs.push_back(v);
    } else if (std::holds_alternative<blocks::Outport>(blk.kind)) {
      for (const auto& v : L.outport.at(blk.id)) outputs.push_back(v);
    } else if (output_count(blk.kind) > 0) {
      for (const auto& v : L.vars.at(blk.id)) locals.push_back(v);
      if (L.ss_state.count(blk.id)) {
        for (const auto& v : L.ss_state.at(blk.id)) locals.push_back(v);
        for (const auto& v : L.ss_next.at(blk.id)) locals.push_back(v);
      }
    }
  }

  std::ostringstream os;
  header(os, "--", gd, rep);
  auto decl = [](const std::vector<std::string>& vs) {
    std::string s;
    for (std::size_t i = 0; i < vs.size(); ++i) s += (i ? "; " : "") + vs[i] + " : real";
    return s;
  };
  os << "node " << sanitize(gd.name()) << "(" << decl(inputs) << ") returns (" << decl(outputs)
     << ");\n";
  if (!locals.empty()) {
    os << "var\n";
    for (const auto& v : locals) os << "  " << v << " : real;\n";
  }
  os << "let\n";

  auto emit_block = [&](std::size_t b, const std::string& lead) {
    const Block& blk = gd.blocks[b];
    if (std::holds_alternative<blocks::Inport>(blk.kind) ||
        std::holds_alternative<blocks::NoiseSource>(blk.kind) ||
        std::holds_alternative<blocks::Scope>(blk.kind) ||
        std::holds_alternative<blocks::AssertLE0>(blk.kind))
      return;
    if (std::holds_alternative<blocks::Outport>(blk.kind)) {
      const auto& o = L.outport.at(blk.id);
      for (std::size_t i = 0; i < o.size(); ++i) os << lead << o[i] << " = " << L.in(b, 0)[i] << ";\n";
      return;
    }
    if (const auto* k = std::get_if<blocks::UnitDelay>(&blk.kind)) {
      const auto& v = L.vars.at(blk.id);
      for (std::size_t i = 0; i < v.size(); ++i)
        os << lead << v[i] << " = " << lit(k->initial[i]) << " -> pre(" << L.in(b, 0)[i] << ");\n";
      return;
    }
    if (std::holds_alternative<blocks::RunningMax>(blk.kind)) {
      const auto& v = L.vars.at(blk.id);
      for (std::size_t i = 0; i < v.size(); ++i)
        os << lead << v[i] << " = " << L.in(b, 0)[i] << " -> " << *component_expr(L, b, i, d)
           << ";\n";
      return;
    }
    if (L.ss_state.count(blk.id)) {
      const auto& s = L.ss_state.at(blk.id);
      const auto& n = L.ss_next.at(blk.id);
      for (std::size_t j = 0; j < s.size(); ++j)
        os << lead << s[j] << " = 0.0 -> pre(" << n[j] << ");\n";
      const auto& v = L.vars.at(blk.id);
      for (std::size_t i = 0; i < v.size(); ++i) {
        const auto& k = std::get<blocks::StateSpace>(blk.kind);
        std::vector<std::string> terms;
        for (std::size_t j = 0; j < s.size(); ++j) terms.push_back(lit(k.c(i, j)) + " * " + s[j]);
        if (k.d.max_abs() != 0.0)
          for (std::size_t j = 0; j < k.d.cols(); ++j)
            terms.push_back(lit(k.d(i, j)) + " * " + L.in(b, 0)[j]);
        std::string e = terms.empty() ? "0.0" : terms[0];
        for (std::size_t j = 1; j < terms.size(); ++j) e += " + " + terms[j];
        os << lead << v[i] << " = " << e << ";\n";
      }
      return;
    }
    if (std::holds_alternative<blocks::Integrator>(blk.kind))
      throw Error(ErrorCode::UnsupportedBlock,
                  "Integrator '" + blk.id + "' has no discrete form for target dataflow");
    const auto& v = L.vars.at(blk.id);
    for (std::size_t i = 0; i < v.size(); ++i) {
      auto e = component_expr(L, b, i, d);
      if (!e)
        throw Error(ErrorCode::UnsupportedBlock,
                    std::string(kind_name(blk.kind)) + " '" + blk.id + "' for target dataflow");
      os << lead << v[i] << " = " << *e << ";\n";
    }
  };

  for (std::size_t b : exec) emit_block(b, "  ");
  // State-space next states read inputs computed anywhere in the step.
  for (std::size_t b : by_id) {
    const Block& blk = gd.blocks[b];
    if (!L.ss_next.count(blk.id)) continue;
    const auto& k = std::get<blocks::StateSpace>(blk.kind);
    const auto& s = L.ss_state.at(blk.id);
    const auto& n = L.ss_next.at(blk.id);
    const auto& u = L.in(b, 0);
    for (std::size_t j = 0; j < n.size(); ++j) {
      std::vector<std::string> terms;
      for (std::size_t c = 0; c < s.size(); ++c) terms.push_back(lit(k.a(j, c)) + " * " + s[c]);
      for (std::size_t c = 0; c < u.size(); ++c) terms.push_back(lit(k.b(j, c)) + " * " + u[c]);
      std::string e = terms.empty() ? "0.0" : terms[0];
      for (std::size_t c = 1; c < terms.size(); ++c) e += " + " + terms[c];
      os << "  " << n[j] << " = " << e << ";\n";
    }
  }

  const auto anno = block_order(gd, Region::Annotation);
  for (std::size_t b : anno) {
    const Block& blk = gd.blocks[b];
    if (std::holds_alternative<blocks::Inport>(blk.kind)) continue;
    emit_block(b, "  --@ ghost ");
  }
  for (std::size_t b : anno) {
    const Block& blk = gd.blocks[b];
    const auto* a = std::get_if<blocks::AssertLE0>(&blk.kind);
    if (!a) continue;
    const std::string& sig = L.in(b, 0)[0];
    const ProofRecord* rec = record_of(rep, blk.id);
    if (rec && rec->path == CertificatePath::ContinuousCarriedRuntimeOnly)
      os << "  -- " << blk.id << ": runtime-checked only\n";
    os << "  --@ ensures " << contract_key(*a) << ": ";
    if (a->check == AssertCheck::MonotoneDecreasing)
      os << "true -> " << sig << " <= pre(" << sig << ")\n";
    else
      os << sig << " <= " << lit(a->tolerance) << "\n";
  }
  for (const auto& r : rep.proofs) {
    if (r.path != CertificatePath::RecomputedDiscrete || !r.discrete_cert) continue;
    const auto x = state_vars(L, r.states);
    if (x.empty()) continue;
    const auto lv = level ? level : r.level;
    os << "  --@ invariant x_P_x: " << quadratic(r.discrete_cert->p, x)
       << " <= " << (lv ? lit(*lv) : std::string("level")) << "\n";
  }
  os << "tel\n";
  return os.str();
}

std::string emit_c_like(const ModelGraph& gd, const DiscretizationReport& rep,
                        std::optional<double> level) {
  const Layout L(gd);
  const std::string m = sanitize(gd.name());
  std::set<std::string> stored;  // variables kept in the state record
  for (const auto& blk : gd.blocks) {
    if (blk.region != Region::Executable) continue;
    if (std::holds_alternative<blocks::UnitDelay>(blk.kind) ||
        std::holds_alternative<blocks::RunningMax>(blk.kind))
      for (const auto& v : L.vars.at(blk.id)) stored.insert(v);
    if (L.ss_state.count(blk.id))
      for (const auto& v : L.ss_state.at(blk.id)) stored.insert(v);
  }
  const Dialect d{"fabs", "fmax", [](const std::string& v) { return "s->" + v; }};
  std::vector<std::size_t> exec = block_order(gd, Region::Executable);
  std::vector<std::size_t> by_id = exec;
  std::sort(by_id.begin(), by_id.end(),
            [&](std::size_t a, std::size_t b) { return gd.blocks[a].id < gd.blocks[b].id; });
  std::vector<std::string> state_fields, in_fields, out_fields;
  std::vector<std::pair<std::string, std::string>> init;
  for (std::size_t b : by_id) {
    const Block& blk = gd.blocks[b];
    if (const auto* k = std::get_if<blocks::UnitDelay>(&blk.kind)) {
      const auto& v = L.vars.at(blk.id);
      for (std::size_t i = 0; i < v.size(); ++i) {
        state_fields.push_back(v[i]);
        init.emplace_back(v[i], lit(k->initial[i]));
      }
    } else if (std::holds_alternative<blocks::RunningMax>(blk.kind)) {
      for (const auto& v : L.vars.at(blk.id)) {
        state_fields.push_back(v);
        init.emplace_back(v, "-HUGE_VAL");
      }
    } else if (L.ss_state.count(blk.id)) {
      for (const auto& v : L.ss_state.at(blk.id)) {
        state_fields.push_back(v);
        init.emplace_back(v, "0.0");
      }
    } else if (std::holds_alternative<blocks::Inport>(blk.kind) ||
               std::holds_alternative<blocks::NoiseSource>(blk.kind)) {
      for (const auto& v : L.vars.at(blk.id)) in_fields.push_back(v);
    } else if (std::holds_alternative<blocks::Outport>(blk.kind)) {
      for (const auto& v : L.outport.at(blk.id)) out_fields.push_back(v);
    }
  }

  std::ostringstream os;
  header(os, "//", gd, rep);
  os << "#include <math.h>\n\n";
  auto record = [&](const std::string& name, const std::vector<std::string>& fields) {
    os << "typedef struct {\n";
    if (fields.empty()) os << "  char unused;\n";
    for (const auto& f : fields) os << "  double " << f << ";\n";
    os << "} " << m << "_" << name << ";\n\n";
  };
  record("state", state_fields);
  record("in", in_fields);
  record("out", out_fields);

  // Ellipsoid invariants over the state record.
  std::vector<std::pair<const ProofRecord*, std::vector<std::string>>> ellipsoids;
  for (const auto& r : rep.proofs) {
    if (r.path != CertificatePath::RecomputedDiscrete || !r.discrete_cert) continue;
    auto x = state_vars(L, r.states);
    bool in_record = !x.empty();
    for (auto& v : x) {
      in_record = in_record && stored.count(v);
      v = "s->" + v;
    }
    if (in_record) ellipsoids.emplace_back(&r, x);
  }

  os << "/*@ assigns *s;\n";
  for (const auto& [f, v] : init) os << "  @ ensures s->" << f << " == " << v << ";\n";
  os << "  @*/\n";
  os << "void " << m << "_init(" << m << "_state *s)\n{\n";
  for (const auto& [f, v] : init) os << "  s->" << f << " = " << v << ";\n";
  os << "}\n\n";

  os << "/*@ requires \\valid(s) && \\valid_read(in) && \\valid(out);\n";
  os << "  @ assigns *s, *out;\n";
  for (const auto& [r, x] : ellipsoids) {
    std::vector<std::string> old;
    for (const auto& v : x) old.push_back("\\old(" + v + ")");
    const std::string now = quadratic(r->discrete_cert->p, x);
    const std::string before = quadratic(r->discrete_cert->p, old);
    if (r->kind == AnnotationKind::Stability) {
      os << "  @ ensures decrease: " << now << " <= " << before << ";\n";
    } else {
      const double a = r->discrete_cert->alpha.value_or(0.0);
      os << "  @ ensures dissipation: (" << now << ") - (" << before << ") + "
         << lit(rep.h) << " * y'y - " << lit(a * a * rep.h) << " * w'w <= 0;\n";
    }
  }
  os << "  @*/\n";
  os << "void " << m << "_step(" << m << "_state *s, const " << m << "_in *in, " << m
     << "_out *out)\n{\n";

  auto emit_block = [&](std::size_t b, const std::string& lead) {
    const Block& blk = gd.blocks[b];
    if (std::holds_alternative<blocks::Scope>(blk.kind) ||
        std::holds_alternative<blocks::AssertLE0>(blk.kind))
      return;
    if (std::holds_alternative<blocks::Inport>(blk.kind) ||
        std::holds_alternative<blocks::NoiseSource>(blk.kind)) {
      if (blk.region == Region::Annotation) return;
      for (const auto& v : L.vars.at(blk.id)) os << lead << "const double " << v << " = in->" << v << ";\n";
      return;
    }
    if (std::holds_alternative<blocks::Outport>(blk.kind)) {
      const auto& o = L.outport.at(blk.id);
      for (std::size_t i = 0; i < o.size(); ++i) os << lead << "out->" << o[i] << " = " << L.in(b, 0)[i] << ";\n";
      return;
    }
    if (std::holds_alternative<blocks::Integrator>(blk.kind))
      throw Error(ErrorCode::UnsupportedBlock,
                  "Integrator '" + blk.id + "' has no discrete form for target c_like");
    const auto& v = L.vars.at(blk.id);
    const bool ghost = blk.region == Region::Annotation;
    for (std::size_t i = 0; i < v.size(); ++i) {
      std::optional<std::string> e;
      if (std::holds_alternative<blocks::UnitDelay>(blk.kind))
        e = ghost ? "\\at(" + L.in(b, 0)[i] + ", Pre)" : "s->" + v[i];
      else
        e = component_expr(L, b, i, d);
      if (!e)
        throw Error(ErrorCode::UnsupportedBlock,
                    std::string(kind_name(blk.kind)) + " '" + blk.id + "' for target c_like");
      os << lead << (ghost ? "double " : "const double ") << v[i] << " = " << *e << ";\n";
    }
  };
  for (std::size_t b : exec) emit_block(b, "  ");
  for (std::size_t b : block_order(gd, Region::Annotation)) {
    const Block& blk = gd.blocks[b];
    if (std::holds_alternative<blocks::Inport>(blk.kind)) continue;
    emit_block(b, "  //@ ghost ");
    if (const auto* a = std::get_if<blocks::AssertLE0>(&blk.kind)) {
      const std::string& sig = L.in(b, 0)[0];
      const ProofRecord* rec = record_of(rep, blk.id);
      if (rec && rec->path == CertificatePath::ContinuousCarriedRuntimeOnly)
        os << "  // " << blk.id << ": runtime-checked only\n";
      os << "  //@ assert " << contract_key(*a) << ": ";
      if (a->check == AssertCheck::MonotoneDecreasing)
        os << sig << " <= \\at(" << sig << ", Pre);\n";
      else
        os << sig << " <= " << lit(a->tolerance) << ";\n";
    }
  }
  for (std::size_t b : by_id) {
    const Block& blk = gd.blocks[b];
    if (std::holds_alternative<blocks::UnitDelay>(blk.kind)) {
      const auto& v = L.vars.at(blk.id);
      for (std::size_t i = 0; i < v.size(); ++i)
        os << "  s->" << v[i] << " = " << L.in(b, 0)[i] << ";\n";
    } else if (std::holds_alternative<blocks::RunningMax>(blk.kind)) {
      for (const auto& v : L.vars.at(blk.id)) os << "  s->" << v << " = " << v << ";\n";
    } else if (L.ss_next.count(blk.id)) {
      const auto& k = std::get<blocks::StateSpace>(blk.kind);
      const auto& s = L.ss_state.at(blk.id);
      const auto& n = L.ss_next.at(blk.id);
      const auto& u = L.in(b, 0);
      for (std::size_t j = 0; j < n.size(); ++j) {
        std::string e;
        for (std::size_t c = 0; c < s.size(); ++c)
          e += (e.empty() ? "" : " + ") + lit(k.a(j, c)) + " * s->" + s[c];
        for (std::size_t c = 0; c < u.size(); ++c)
          e += (e.empty() ? "" : " + ") + lit(k.b(j, c)) + " * " + u[c];
        os << "  const double " << n[j] << " = " << (e.empty() ? "0.0" : e) << ";\n";
      }
      for (std::size_t j = 0; j < n.size(); ++j) os << "  s->" << s[j] << " = " << n[j] << ";\n";
    }
  }
  os << "}\n\n";

  os << "void " << m << "_run(" << m << "_state *s, const " << m << "_in *in, " << m
     << "_out *out, long steps)\n{\n";
  if (!ellipsoids.empty()) {
    os << "  /*@ loop invariant 0 <= k <= steps;\n";
    for (const auto& [r, x] : ellipsoids) {
      const auto lv = level ? level : r->level;
      os << "    @ loop invariant x_P_x: " << quadratic(r->discrete_cert->p, x) << " <= "
         << (lv ? lit(*lv) : std::string("level")) << ";\n";
    }
    os << "    @ loop assigns k, *s, out[0 .. steps - 1];\n";
    os << "    @*/\n";
  }
  os << "  for (long k = 0; k < steps; ++k) " << m << "_step(s, &in[k], &out[k]);\n";
  os << "}\n";
  return os.str();
}

}  // namespace

std::map<std::string, std::vector<std::string>> code_variable_names(const ModelGraph& gd) {
  const Layout L(gd);
  std::map<std::string, std::vector<std::string>> r;
  for (const auto& [id, v] : L.vars)
    if (gd.find(id)->region == Region::Executable) r[id] = v;
  return r;
}

std::string emit_code(const ModelGraph& gd, const DiscretizationReport& report, CodeTarget target,
                      std::optional<double> level) {
  check_codegen(gd);
  return target == CodeTarget::Dataflow ? emit_dataflow(gd, report, level)
                                        : emit_c_like(gd, report, level);
}

}  // namespace proofblocks
