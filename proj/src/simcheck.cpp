#include "proofblocks/simcheck.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <memory>
#include <set>
#include <sstream>

#include "json_io.hpp"
#include "proofblocks/errors.hpp"
#include "proofblocks/frontend.hpp"
#include "proofblocks/graph.hpp"

namespace proofblocks {

namespace {

using Vec = std::vector<double>;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Engine {
 public:
  Engine(const ModelGraph& g, const SimConfig& cfg)
      : g_(g), cfg_(cfg), idx_(g), dims_(block_output_dims(g)), order_(evaluation_order(g)) {
    const std::size_t n = g.blocks.size();
    out_.resize(n);
    state_.resize(n);
    noise_.resize(n);
    power_.assign(n, 0.0);
    for (std::size_t b = 0; b < n; ++b) {
      out_[b].assign(dims_[b], 0.0);
      std::visit(overloaded{
                     [&](const blocks::Integrator& k) { state_[b] = k.initial; },
                     [&](const blocks::UnitDelay& k) { state_[b] = k.initial; },
                     [&](const blocks::StateSpace& k) { state_[b].assign(k.a.rows(), 0.0); },
                     [&](const blocks::NoiseSource& k) {
                       streams_.emplace(b, noise_stream(cfg.seed, g.blocks[b].id));
                       noise_[b].assign(k.dim, 0.0);
                     },
                     [](const auto&) {},
                 },
                 g.blocks[b].kind);
    }
  }

  const std::vector<std::size_t>& dims() const { return dims_; }
  const std::vector<Vec>& outputs() const { return out_; }

  void draw_noise(std::size_t step) {
    for (auto& [b, rng] : streams_) {
      const auto& k = std::get<blocks::NoiseSource>(g_.blocks[b].kind);
      Vec& w = noise_[b];
      switch (k.noise.kind) {
        case NoiseKind::Zero:
          std::fill(w.begin(), w.end(), 0.0);
          break;
        case NoiseKind::UnitPeakUniform:
          for (double& v : w) v = k.noise.bound * (2.0 * rng.uniform() - 1.0);
          break;
        case NoiseKind::BoundedPower: {
          double sq = 0.0;
          for (double& v : w) {
            v = std::sqrt(k.noise.bound) * (2.0 * rng.uniform() - 1.0);
            sq += v * v;
          }
          const double budget = k.noise.bound * static_cast<double>(step + 1) - power_[b];
          if (sq > budget) {
            const double s = budget > 0.0 ? std::sqrt(budget / sq) : 0.0;
            sq = 0.0;
            for (double& v : w) {
              v *= s;
              sq += v * v;
            }
          }
          power_[b] += sq;
          break;
        }
      }
    }
  }

  void evaluate(std::size_t step) {
    for (std::size_t b : order_) compute(b, step);
  }

  // Integrator and continuous StateSpace states, flattened.
  Vec continuous_state() const {
    Vec x;
    for (std::size_t b = 0; b < g_.blocks.size(); ++b)
      if (is_continuous_state(b)) x.insert(x.end(), state_[b].begin(), state_[b].end());
    return x;
  }
  void set_continuous_state(const Vec& x) {
    std::size_t o = 0;
    for (std::size_t b = 0; b < g_.blocks.size(); ++b)
      if (is_continuous_state(b))
        for (double& v : state_[b]) v = x[o++];
  }
  Vec derivative() const {
    Vec dx;
    for (std::size_t b = 0; b < g_.blocks.size(); ++b) {
      if (!is_continuous_state(b)) continue;
      if (std::holds_alternative<blocks::Integrator>(g_.blocks[b].kind)) {
        const Vec& u = in(b, 0);
        dx.insert(dx.end(), u.begin(), u.end());
      } else {
        const Vec s = ss_next(b);
        dx.insert(dx.end(), s.begin(), s.end());
      }
    }
    return dx;
  }

  // Discrete-time updates after the outputs of a step are known.
  void advance_discrete(bool include_state_space) {
    for (std::size_t b = 0; b < g_.blocks.size(); ++b) {
      std::visit(overloaded{
                     [&](const blocks::UnitDelay&) { state_[b] = in(b, 0); },
                     [&](const blocks::RunningMax&) { state_[b] = out_[b]; },
                     [&](const blocks::StateSpace&) {
                       if (include_state_space) state_[b] = ss_next(b);
                     },
                     [](const auto&) {},
                 },
                 g_.blocks[b].kind);
    }
  }

  // First non-finite output, as a block index.
  std::optional<std::size_t> nonfinite() const {
    for (std::size_t b = 0; b < out_.size(); ++b)
      for (double v : out_[b])
        if (!std::isfinite(v)) return b;
    return std::nullopt;
  }

 private:
  bool is_continuous_state(std::size_t b) const {
    const auto& k = g_.blocks[b].kind;
    return std::holds_alternative<blocks::Integrator>(k) ||
           (!g_.is_discrete() && std::holds_alternative<blocks::StateSpace>(k));
  }

  const Vec& in(std::size_t b, std::size_t port) const { return out_[*idx_.driver(b, port)]; }

  Vec ss_next(std::size_t b) const {
    const auto& k = std::get<blocks::StateSpace>(g_.blocks[b].kind);
    const Vec& s = state_[b];
    const Vec& u = in(b, 0);
    Vec r(k.a.rows(), 0.0);
    for (std::size_t i = 0; i < r.size(); ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < s.size(); ++j) acc += k.a(i, j) * s[j];
      for (std::size_t j = 0; j < u.size(); ++j) acc += k.b(i, j) * u[j];
      r[i] = acc;
    }
    return r;
  }

  void compute(std::size_t b, std::size_t step) {
    Vec& y = out_[b];
    std::visit(
        overloaded{
            [&](const blocks::Inport&) {
              std::fill(y.begin(), y.end(), 0.0);
              auto it = cfg_.inputs.find(g_.blocks[b].id);
              if (it == cfg_.inputs.end() || step >= it->second.size()) return;
              const Vec& v = it->second[step];
              if (v.size() != y.size())
                throw Error(ErrorCode::DimensionMismatch,
                            "input '" + g_.blocks[b].id + "' sample has dimension " +
                                std::to_string(v.size()) + ", expected " + std::to_string(y.size()));
              y = v;
            },
            [&](const blocks::Constant& k) { y = k.value; },
            [&](const blocks::NoiseSource&) { y = noise_[b]; },
            [&](const blocks::Gain& k) {
              const Vec& u = in(b, 0);
              if (k.mode == GainMode::Matrix) {
                for (std::size_t i = 0; i < y.size(); ++i) {
                  double acc = k.gain(i, 0) * u[0];
                  for (std::size_t j = 1; j < u.size(); ++j) acc += k.gain(i, j) * u[j];
                  y[i] = acc;
                }
              } else if (k.gain.size() == 1) {
                for (std::size_t i = 0; i < y.size(); ++i) y[i] = k.gain(0, 0) * u[i];
              } else {
                for (std::size_t i = 0; i < y.size(); ++i) y[i] = k.gain(i, 0) * u[i];
              }
            },
            [&](const blocks::Sum& k) {
              for (std::size_t i = 0; i < y.size(); ++i) {
                double acc = k.signs[0] == '-' ? -in(b, 0)[i] : in(b, 0)[i];
                for (std::size_t p = 1; p < k.signs.size(); ++p)
                  acc = k.signs[p] == '-' ? acc - in(b, p)[i] : acc + in(b, p)[i];
                y[i] = acc;
              }
            },
            [&](const blocks::Product& k) {
              const Vec& a = in(b, 0);
              const Vec& c = in(b, 1);
              switch (k.mode) {
                case ProductMode::Dot: {
                  double acc = a[0] * c[0];
                  for (std::size_t i = 1; i < a.size(); ++i) acc += a[i] * c[i];
                  y[0] = acc;
                  break;
                }
                case ProductMode::Elementwise:
                  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] * c[i];
                  break;
                case ProductMode::Matrix:
                  for (std::size_t i = 0; i < y.size(); ++i)
                    y[i] = a.size() == 1 ? a[0] * c[i] : a[i] * c[0];
                  break;
              }
            },
            [&](const blocks::Integrator&) { y = state_[b]; },
            [&](const blocks::UnitDelay&) { y = state_[b]; },
            [&](const blocks::StateSpace& k) {
              const Vec& s = state_[b];
              const bool feed = k.d.max_abs() != 0.0;
              for (std::size_t i = 0; i < y.size(); ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < s.size(); ++j) acc += k.c(i, j) * s[j];
                if (feed)
                  for (std::size_t j = 0; j < k.d.cols(); ++j) acc += k.d(i, j) * in(b, 0)[j];
                y[i] = acc;
              }
            },
            [&](const blocks::PolyFun& k) {
              const Vec& u = in(b, 0);
              for (std::size_t i = 0; i < y.size(); ++i) {
                double r = k.coefficients.empty() ? 0.0 : k.coefficients.back();
                for (std::size_t c = k.coefficients.size(); c-- > 1;)
                  r = k.coefficients[c - 1] + u[i] * r;
                y[i] = r;
              }
            },
            [&](const blocks::Transpose&) { y = in(b, 0); },
            [&](const blocks::QuadraticForm& k) {
              const Vec& x = in(b, 0);
              double acc = 0.0;
              for (std::size_t i = 0; i < x.size(); ++i) {
                double row = 0.0;
                for (std::size_t j = 0; j < x.size(); ++j) row += k.p(i, j) * x[j];
                acc += x[i] * row;
              }
              y[0] = acc;
            },
            [&](const blocks::Mux& k) {
              std::size_t o = 0;
              for (std::size_t p = 0; p < k.inputs; ++p)
                for (double v : in(b, p)) y[o++] = v;
            },
            [&](const blocks::Selector& k) {
              const Vec& u = in(b, 0);
              for (std::size_t i = 0; i < k.indices.size(); ++i) y[i] = u[k.indices[i]];
            },
            [&](const blocks::InfNorm&) {
              double m = 0.0;
              for (double v : in(b, 0)) m = std::max(m, std::abs(v));
              y[0] = m;
            },
            [&](const blocks::RunningMax&) {
              const Vec& u = in(b, 0);
              for (std::size_t i = 0; i < y.size(); ++i)
                y[i] = state_[b].empty() ? u[i] : std::max(state_[b][i], u[i]);
            },
            [](const auto&) {},
        },
        g_.blocks[b].kind);
  }

  const ModelGraph& g_;
  const SimConfig& cfg_;
  GraphIndex idx_;
  std::vector<std::size_t> dims_;
  std::vector<std::size_t> order_;
  std::vector<Vec> out_;
  std::vector<Vec> state_;
  std::vector<Vec> noise_;
  std::vector<double> power_;
  std::map<std::size_t, SplitMix64> streams_;
};

Vec axpy(const Vec& x, double a, const Vec& d) {
  Vec r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) r[i] = x[i] + a * d[i];
  return r;
}

struct Evaluation {
  AssertionOutcome outcome;
  std::vector<AssertionSample> samples;
};

Evaluation evaluate_assertion(const std::string& id, const blocks::AssertLE0& a, const Vec& s,
                              const Vec* v, double h) {
  Evaluation e;
  e.outcome.id = id;
  e.outcome.label = a.label;
  double max_s = 0.0, max_v = 0.0;
  for (double x : s) max_s = std::max(max_s, std::abs(x));
  if (v)
    for (double x : *v) max_v = std::max(max_v, std::abs(x));
  e.samples.reserve(s.size());
  for (std::size_t k = 0; k < s.size(); ++k) {
    std::map<std::string, double> witness;
    bool ok = true;
    if (v && (*v)[k] < -a.tolerance) {
      ok = false;
      witness["storage"] = (*v)[k];
    }
    if (k >= a.from_step) {
      if (a.check == AssertCheck::Value) {
        double scale = 1.0;
        if (v) scale += std::max(std::abs((*v)[k]), k > 0 ? std::abs((*v)[k - 1]) : 0.0);
        if (!(s[k] <= a.tolerance * scale)) {
          ok = false;
          witness["value"] = s[k];
          witness["tolerance"] = a.tolerance * scale;
        }
      } else if (k >= 1) {
        const double rate = (s[k] - s[k - 1]) / h;
        const double limit = a.rate_tolerance * (1.0 + max_s);
        if (!(rate <= limit)) {
          ok = false;
          witness["value"] = s[k];
          witness["previous"] = s[k - 1];
          witness["rate"] = rate;
          witness["tolerance"] = limit;
        }
      }
    }
    e.samples.push_back({k, s[k], ok});
    if (!ok && !e.outcome.first_violation) {
      e.outcome.pass = false;
      e.outcome.first_violation = k;
      if (v) witness.emplace("storage", (*v)[k]);
      witness.emplace("value", s[k]);
      e.outcome.witness = std::move(witness);
    }
  }
  if (a.label == "dissipation" && !s.empty()) {
    double ledger = 0.0;
    if (a.check == AssertCheck::MonotoneDecreasing) {
      ledger = s.front() - s.back();
    } else {
      for (std::size_t k = a.from_step; k < s.size(); ++k) ledger -= s[k];
    }
    e.outcome.ledger = ledger;
    if (ledger < -a.tolerance * (1.0 + max_v) && e.outcome.pass) {
      e.outcome.pass = false;
      e.outcome.first_violation = s.size() - 1;
      e.outcome.witness = {{"ledger", ledger}};
    }
  }
  return e;
}

struct AssertInputs {
  std::string signal;
  std::string storage;
};

std::map<std::string, AssertInputs> assertion_inputs(const ModelGraph& g) {
  std::map<std::string, AssertInputs> r;
  for (const auto& b : g.blocks) {
    const auto* a = std::get_if<blocks::AssertLE0>(&b.kind);
    if (!a) continue;
    for (const auto& w : g.wires)
      if (w.dst.block == b.id) r[b.id].signal = w.src.block;
    r[b.id].storage = a->storage;
  }
  return r;
}

}  // namespace

const char* to_string(SimMethod method) {
  return method == SimMethod::Rk4 ? "rk4" : "exact_discrete";
}

std::string trace_column(const std::string& block, std::size_t i, std::size_t dim) {
  return dim == 1 ? block : block + "[" + std::to_string(i) + "]";
}

std::optional<std::size_t> Trace::column_index(const std::string& name) const {
  auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) return std::nullopt;
  return static_cast<std::size_t>(it - columns.begin());
}

std::vector<double> Trace::column(const std::string& name) const {
  auto c = column_index(name);
  if (!c) throw Error(ErrorCode::UnresolvedWire, "trace has no signal '" + name + "'");
  std::vector<double> r;
  r.reserve(rows.size());
  for (const auto& row : rows) r.push_back(row[*c]);
  return r;
}

std::uint64_t SplitMix64::next() {
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double SplitMix64::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

SplitMix64 noise_stream(std::uint64_t seed, std::string_view block_id) {
  SplitMix64 root(seed);
  return SplitMix64(root.next() ^ fnv1a(block_id));
}

Trace simulate(const ModelGraph& g, const SimConfig& cfg, const Tolerances&) {
  auto diags = validate(g);
  if (has_errors(diags)) throw DiagnosticError(std::move(diags));
  const SimMethod method =
      cfg.method.value_or(g.is_discrete() ? SimMethod::ExactDiscrete : SimMethod::Rk4);
  if (method == SimMethod::ExactDiscrete && !g.is_discrete())
    throw Error(ErrorCode::PreconditionViolation, "exact_discrete needs a discrete-time graph");
  if (method == SimMethod::Rk4 && g.is_discrete())
    throw Error(ErrorCode::PreconditionViolation, "rk4 needs a continuous-time graph");
  const double h = g.is_discrete() ? *g.sample_time : cfg.h_sim;
  if (!(cfg.horizon > 0.0) || !(h > 0.0))
    throw Error(ErrorCode::PreconditionViolation, "horizon and step must be positive");
  const auto steps = static_cast<std::size_t>(std::llround(cfg.horizon / h));

  Engine eng(g, cfg);
  Trace t;
  t.step = h;
  const auto& dims = eng.dims();
  std::vector<std::size_t> recorded;
  for (std::size_t b = 0; b < g.blocks.size(); ++b) {
    if (output_count(g.blocks[b].kind) == 0) continue;
    recorded.push_back(b);
    for (std::size_t i = 0; i < dims[b]; ++i)
      t.columns.push_back(trace_column(g.blocks[b].id, i, dims[b]));
  }
  t.times.reserve(steps + 1);
  t.rows.reserve(steps + 1);

  for (std::size_t k = 0; k <= steps; ++k) {
    if (cfg.cancel) cfg.cancel->check();
    eng.draw_noise(k);
    eng.evaluate(k);
    if (auto bad = eng.nonfinite())
      throw Error(ErrorCode::NonfiniteSignal, "step " + std::to_string(k) + ": output of '" +
                                                  g.blocks[*bad].id + "' is not finite");
    t.times.push_back(static_cast<double>(k) * h);
    auto& row = t.rows.emplace_back();
    row.reserve(t.columns.size());
    for (std::size_t b : recorded)
      row.insert(row.end(), eng.outputs()[b].begin(), eng.outputs()[b].end());
    if (k == steps) break;

    if (method == SimMethod::Rk4) {
      const Vec x = eng.continuous_state();
      const Vec k1 = eng.derivative();
      eng.set_continuous_state(axpy(x, h / 2, k1));
      eng.evaluate(k);
      const Vec k2 = eng.derivative();
      eng.set_continuous_state(axpy(x, h / 2, k2));
      eng.evaluate(k);
      const Vec k3 = eng.derivative();
      eng.set_continuous_state(axpy(x, h, k3));
      eng.evaluate(k);
      const Vec k4 = eng.derivative();
      Vec next(x.size());
      for (std::size_t i = 0; i < x.size(); ++i)
        next[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      // RunningMax keeps the output of the committed step, not of the stages.
      eng.set_continuous_state(x);
      eng.evaluate(k);
      eng.advance_discrete(false);
      eng.set_continuous_state(next);
    } else {
      eng.advance_discrete(true);
    }
  }

  for (const auto& [id, ins] : assertion_inputs(g)) {
    const auto& a = std::get<blocks::AssertLE0>(g.find(id)->kind);
    const Vec s = t.column(ins.signal);
    const Vec v = ins.storage.empty() ? Vec{} : t.column(ins.storage);
    t.assertion_log[id] =
        evaluate_assertion(id, a, s, ins.storage.empty() ? nullptr : &v, h).samples;
  }
  return t;
}

bool CheckReport::all_pass() const {
  return std::all_of(assertions.begin(), assertions.end(),
                     [](const AssertionOutcome& a) { return a.pass; });
}

const AssertionOutcome* CheckReport::find(const std::string& id) const {
  for (const auto& a : assertions)
    if (a.id == id) return &a;
  return nullptr;
}

CheckReport check_assertions(const Trace& t, const ModelGraph& g) {
  CheckReport r;
  for (const auto& [id, ins] : assertion_inputs(g)) {
    const auto& a = std::get<blocks::AssertLE0>(g.find(id)->kind);
    const Vec s = t.column(ins.signal);
    const Vec v = ins.storage.empty() ? Vec{} : t.column(ins.storage);
    r.assertions.push_back(
        evaluate_assertion(id, a, s, ins.storage.empty() ? nullptr : &v, t.step).outcome);
  }
  return r;
}

std::string trace_to_csv(const Trace& t) {
  std::string out = "time";
  for (const auto& c : t.columns) out += "," + c;
  out += "\n";
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    out += format_double(t.times[k]);
    for (double v : t.rows[k]) out += "," + format_double(v);
    out += "\n";
  }
  return out;
}

std::string report_to_json(const CheckReport& r) {
  using detail::json;
  json items = json::array();
  for (const auto& a : r.assertions) {
    json j;
    j["id"] = a.id;
    j["label"] = a.label;
    j["pass"] = a.pass;
    j["first_violation"] = a.first_violation ? json(*a.first_violation) : json(nullptr);
    j["witness"] = json::object();
    for (const auto& [k, v] : a.witness) j["witness"][k] = v;
    if (a.ledger) j["ledger"] = *a.ledger;
    items.push_back(std::move(j));
  }
  return detail::write_canonical_json(json{{"assertions", items}, {"pass", r.all_pass()}});
}

// ---- dataflow target -------------------------------------------------------

namespace {

enum class Tok { Ident, Number, Symbol, End };

struct Token {
  Tok kind;
  std::string text;
  double number = 0.0;
  int line = 0;
};

[[noreturn]] void parse_fail(int line, const std::string& msg) {
  throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": " + msg);
}

std::vector<Token> lex(std::string_view src, std::vector<DataflowAnnotation>& annotations) {
  std::vector<Token> out;
  int line = 1;
  std::size_t i = 0;
  while (i < src.size()) {
    const char c = src[i];
    if (c == '\n') {
      ++line;
      ++i;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (src.substr(i, 2) == "--") {
      std::size_t end = src.find('\n', i);
      if (end == std::string_view::npos) end = src.size();
      std::string_view body = src.substr(i + 2, end - i - 2);
      if (!body.empty() && body[0] == '@') {
        std::string rest(body.substr(1));
        auto trim = [](std::string s) {
          const auto b = s.find_first_not_of(" \t\r");
          const auto e = s.find_last_not_of(" \t\r");
          return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        rest = trim(rest);
        DataflowAnnotation a;
        const auto sp = rest.find(' ');
        a.kind = rest.substr(0, sp);
        rest = sp == std::string::npos ? "" : trim(rest.substr(sp + 1));
        const auto colon = rest.find(':');
        if (colon != std::string::npos && rest.find_first_of(" (") > colon) {
          a.key = rest.substr(0, colon);
          a.text = trim(rest.substr(colon + 1));
        } else {
          a.text = rest;
        }
        annotations.push_back(std::move(a));
      }
      i = end;
    } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i;
      while (j < src.size() && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_'))
        ++j;
      out.push_back({Tok::Ident, std::string(src.substr(i, j - i)), 0.0, line});
      i = j;
    } else if (std::isdigit(static_cast<unsigned char>(c)) ||
               (c == '.' && i + 1 < src.size() && std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
      std::string buf(src.substr(i, std::min<std::size_t>(64, src.size() - i)));
      char* end = nullptr;
      const double v = std::strtod(buf.c_str(), &end);
      const std::size_t len = static_cast<std::size_t>(end - buf.c_str());
      out.push_back({Tok::Number, buf.substr(0, len), v, line});
      i += len;
    } else if (src.substr(i, 2) == "->") {
      out.push_back({Tok::Symbol, "->", 0.0, line});
      i += 2;
    } else if (std::string_view("(),;:=+-*/").find(c) != std::string_view::npos) {
      out.push_back({Tok::Symbol, std::string(1, c), 0.0, line});
      ++i;
    } else {
      parse_fail(line, std::string("unexpected character '") + c + "'");
    }
  }
  out.push_back({Tok::End, "", 0.0, line});
  return out;
}

struct Expr {
  enum Op { Num, Var, Pre, Neg, Add, Sub, Mul, Div, Arrow, Abs, Max, Min } op = Num;
  double value = 0.0;
  std::size_t var = 0;
  std::vector<std::unique_ptr<Expr>> args;
};

struct Equation {
  std::size_t target;
  std::unique_ptr<Expr> rhs;
};

class Parser {
 public:
  Parser(std::vector<Token> toks, DataflowProgram& prog) : toks_(std::move(toks)), prog_(prog) {}

  std::vector<Equation> run() {
    expect_word("node");
    prog_.node = ident("node name");
    expect("(");
    if (!peek(")")) declarations(prog_.inputs, ")");
    expect(")");
    expect_word("returns");
    expect("(");
    if (!peek(")")) declarations(prog_.outputs, ")");
    expect(")");
    expect(";");
    if (peek_word("var")) {
      ++pos_;
      while (!peek_word("let")) declarations(prog_.locals, ";", true);
    }
    expect_word("let");
    for (const auto& v : prog_.inputs) defined_.insert(index_of(v));
    std::vector<Equation> eqs;
    while (!peek_word("tel")) {
      if (cur().kind == Tok::End) parse_fail(cur().line, "missing 'tel'");
      const int line = cur().line;
      const std::string name = ident("equation target");
      const auto target = find_var(name, line);
      if (std::find(prog_.inputs.begin(), prog_.inputs.end(), name) != prog_.inputs.end())
        parse_fail(line, "input '" + name + "' cannot be defined");
      if (defined_.count(target)) parse_fail(line, "'" + name + "' is defined twice");
      expect("=");
      auto rhs = expr();
      expect(";");
      defined_.insert(target);
      eqs.push_back({target, std::move(rhs)});
    }
    ++pos_;
    if (peek(";")) ++pos_;
    if (cur().kind != Tok::End) parse_fail(cur().line, "text after 'tel'");
    if (eqs.empty()) parse_fail(cur().line, "empty node");
    for (std::size_t v = 0; v < vars_.size(); ++v)
      if (!defined_.count(v)) parse_fail(cur().line, "'" + vars_[v] + "' is never defined");
    for (const auto& [v, line] : pre_refs_)
      if (!defined_.count(v)) parse_fail(line, "pre of undefined '" + vars_[v] + "'");
    return eqs;
  }

  const std::vector<std::string>& vars() const { return vars_; }

 private:
  const Token& cur() const { return toks_[pos_]; }
  bool peek(const char* sym) const { return cur().kind == Tok::Symbol && cur().text == sym; }
  bool peek_word(const char* w) const { return cur().kind == Tok::Ident && cur().text == w; }
  void expect(const char* sym) {
    if (!peek(sym)) parse_fail(cur().line, std::string("expected '") + sym + "', got '" + cur().text + "'");
    ++pos_;
  }
  void expect_word(const char* w) {
    if (!peek_word(w)) parse_fail(cur().line, std::string("expected '") + w + "', got '" + cur().text + "'");
    ++pos_;
  }
  std::string ident(const char* what) {
    if (cur().kind != Tok::Ident) parse_fail(cur().line, std::string("expected ") + what);
    return toks_[pos_++].text;
  }

  void declarations(std::vector<std::string>& into, const char* close, bool single_group = false) {
    for (;;) {
      std::vector<std::string> names{ident("variable name")};
      while (peek(",")) {
        ++pos_;
        names.push_back(ident("variable name"));
      }
      expect(":");
      expect_word("real");
      for (auto& n : names) {
        if (ids_.count(n)) parse_fail(cur().line, "'" + n + "' declared twice");
        ids_[n] = vars_.size();
        vars_.push_back(n);
        into.push_back(n);
      }
      if (single_group) {
        expect(";");
        return;
      }
      if (peek(close)) return;
      expect(";");
      if (peek(close)) return;
    }
  }

  std::size_t index_of(const std::string& n) const { return ids_.at(n); }
  std::size_t find_var(const std::string& n, int line) const {
    auto it = ids_.find(n);
    if (it == ids_.end()) parse_fail(line, "undeclared variable '" + n + "'");
    return it->second;
  }

  std::unique_ptr<Expr> node(Expr::Op op, std::unique_ptr<Expr> a, std::unique_ptr<Expr> b = {}) {
    auto e = std::make_unique<Expr>();
    e->op = op;
    e->args.push_back(std::move(a));
    if (b) e->args.push_back(std::move(b));
    return e;
  }

  std::unique_ptr<Expr> expr() {
    auto lhs = additive();
    if (peek("->")) {
      ++pos_;
      lhs = node(Expr::Arrow, std::move(lhs), expr());
    }
    return lhs;
  }
  std::unique_ptr<Expr> additive() {
    auto lhs = multiplicative();
    while (peek("+") || peek("-")) {
      const auto op = cur().text == "+" ? Expr::Add : Expr::Sub;
      ++pos_;
      lhs = node(op, std::move(lhs), multiplicative());
    }
    return lhs;
  }
  std::unique_ptr<Expr> multiplicative() {
    auto lhs = unary();
    while (peek("*") || peek("/")) {
      const auto op = cur().text == "*" ? Expr::Mul : Expr::Div;
      ++pos_;
      lhs = node(op, std::move(lhs), unary());
    }
    return lhs;
  }
  std::unique_ptr<Expr> unary() {
    if (peek("-")) {
      ++pos_;
      return node(Expr::Neg, unary());
    }
    return primary();
  }
  std::unique_ptr<Expr> primary() {
    const Token& t = cur();
    if (t.kind == Tok::Number) {
      ++pos_;
      auto e = std::make_unique<Expr>();
      e->value = t.number;
      return e;
    }
    if (peek("(")) {
      ++pos_;
      auto e = expr();
      expect(")");
      return e;
    }
    if (t.kind != Tok::Ident) parse_fail(t.line, "unexpected '" + t.text + "' in expression");
    const std::string name = t.text;
    const int line = t.line;
    ++pos_;
    if (name == "pre") {
      expect("(");
      const std::string v = ident("variable after pre");
      expect(")");
      auto e = std::make_unique<Expr>();
      e->op = Expr::Pre;
      e->var = find_var(v, line);
      pre_refs_.emplace_back(e->var, line);
      return e;
    }
    if (name == "abs" || name == "max" || name == "min") {
      expect("(");
      auto e = std::make_unique<Expr>();
      e->op = name == "abs" ? Expr::Abs : name == "max" ? Expr::Max : Expr::Min;
      e->args.push_back(expr());
      if (e->op != Expr::Abs) {
        expect(",");
        e->args.push_back(expr());
      }
      expect(")");
      return e;
    }
    auto e = std::make_unique<Expr>();
    e->op = Expr::Var;
    e->var = find_var(name, line);
    if (!defined_.count(e->var)) parse_fail(line, "'" + name + "' used before its definition");
    return e;
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  DataflowProgram& prog_;
  std::map<std::string, std::size_t> ids_;
  std::vector<std::string> vars_;
  std::set<std::size_t> defined_;
  std::vector<std::pair<std::size_t, int>> pre_refs_;
};

double eval(const Expr& e, const Vec& now, const Vec& prev, std::size_t step) {
  switch (e.op) {
    case Expr::Num: return e.value;
    case Expr::Var: return now[e.var];
    case Expr::Pre:
      if (step == 0) throw Error(ErrorCode::ParseError, "pre evaluated at the first step");
      return prev[e.var];
    case Expr::Neg: return -eval(*e.args[0], now, prev, step);
    case Expr::Add: return eval(*e.args[0], now, prev, step) + eval(*e.args[1], now, prev, step);
    case Expr::Sub: return eval(*e.args[0], now, prev, step) - eval(*e.args[1], now, prev, step);
    case Expr::Mul: return eval(*e.args[0], now, prev, step) * eval(*e.args[1], now, prev, step);
    case Expr::Div: return eval(*e.args[0], now, prev, step) / eval(*e.args[1], now, prev, step);
    case Expr::Arrow:
      return step == 0 ? eval(*e.args[0], now, prev, step) : eval(*e.args[1], now, prev, step);
    case Expr::Abs: return std::abs(eval(*e.args[0], now, prev, step));
    case Expr::Max:
      return std::max(eval(*e.args[0], now, prev, step), eval(*e.args[1], now, prev, step));
    case Expr::Min:
      return std::min(eval(*e.args[0], now, prev, step), eval(*e.args[1], now, prev, step));
  }
  return 0.0;
}

}  // namespace

DataflowProgram parse_dataflow(std::string_view text) {
  DataflowProgram prog;
  auto toks = lex(text, prog.annotations);
  Parser(std::move(toks), prog).run();
  return prog;
}

Trace interpret_dataflow(std::string_view text,
                         const std::map<std::string, std::vector<double>>& inputs,
                         std::size_t steps) {
  DataflowProgram prog;
  auto toks = lex(text, prog.annotations);
  Parser parser(std::move(toks), prog);
  const auto eqs = parser.run();
  const auto& vars = parser.vars();

  Trace t;
  t.step = 1.0;
  t.columns = vars;
  Vec prev(vars.size(), 0.0), now(vars.size(), 0.0);
  std::vector<const std::vector<double>*> feeds;
  for (const auto& name : prog.inputs) {
    auto it = inputs.find(name);
    feeds.push_back(it == inputs.end() ? nullptr : &it->second);
  }
  for (std::size_t k = 0; k < steps; ++k) {
    for (std::size_t i = 0; i < feeds.size(); ++i)
      now[i] = feeds[i] && k < feeds[i]->size() ? (*feeds[i])[k] : 0.0;
    for (const auto& eq : eqs) now[eq.target] = eval(*eq.rhs, now, prev, k);
    t.times.push_back(static_cast<double>(k));
    t.rows.push_back(now);
    prev = now;
  }
  return t;
}

}  // namespace proofblocks
