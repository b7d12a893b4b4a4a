#include "proofblocks/frontend.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iterator>
#include <map>


#include "json_io.hpp"
#include "proofblocks/graph.hpp"

namespace proofblocks {

using json = detail::json;

namespace {

struct Position {
  int line = 0;
  int column = 0;
};

Position position_at(std::string_view text, std::size_t offset) {
  Position p{1, 1};
  offset = std::min(offset, text.size());
  for (std::size_t i = 0; i < offset; ++i) {
    if (text[i] == '\n') {
      ++p.line;
      p.column = 1;
    } else {
      ++p.column;
    }
  }
  return p;
}

// Input iterator that remembers how far the parser has read.
class CountingIterator {
 public:
  using iterator_category = std::forward_iterator_tag;
  using value_type = char;
  using difference_type = std::ptrdiff_t;
  using pointer = const char*;
  using reference = const char&;

  CountingIterator() = default;
  CountingIterator(const char* p, const char** furthest) : p_(p), furthest_(furthest) {}

  reference operator*() const { return *p_; }
  CountingIterator& operator++() {
    ++p_;
    if (furthest_ && p_ > *furthest_) *furthest_ = p_;
    return *this;
  }
  CountingIterator operator++(int) {
    CountingIterator old = *this;
    ++*this;
    return old;
  }
  bool operator==(const CountingIterator& o) const { return p_ == o.p_; }
  bool operator!=(const CountingIterator& o) const { return p_ != o.p_; }

 private:
  const char* p_ = nullptr;
  const char** furthest_ = nullptr;
};

std::string escape_pointer(const std::string& key) {
  std::string out;
  for (char c : key) {
    if (c == '~') out += "~0";
    else if (c == '/') out += "~1";
    else out += c;
  }
  return out;
}

// Records the source offset of every value, keyed by JSON pointer. Object
// members are located at their key.
class PositionRecorder : public nlohmann::json_sax<json> {
 public:
  PositionRecorder(const char* base, const char** furthest) : base_(base), furthest_(furthest) {}

  std::map<std::string, std::size_t> offsets;
  std::optional<std::size_t> error_offset;
  std::string error_message;

  bool null() override { return value(); }
  bool boolean(bool) override { return value(); }
  bool number_integer(number_integer_t) override { return value(); }
  bool number_unsigned(number_unsigned_t) override { return value(); }
  bool number_float(number_float_t, const string_t&) override { return value(); }
  bool string(string_t&) override { return value(); }
  bool binary(binary_t&) override { return value(); }
  bool start_object(std::size_t) override { return open(true); }
  bool end_object() override { return close(); }
  bool start_array(std::size_t) override { return open(false); }
  bool end_array() override { return close(); }
  bool key(string_t& k) override {
    if (!stack_.empty()) {
      stack_.back().key = k;
      stack_.back().key_offset = here();
    }
    return true;
  }
  bool parse_error(std::size_t position, const std::string&,
                   const nlohmann::detail::exception& ex) override {
    error_offset = position > 0 ? position - 1 : 0;
    error_message = ex.what();
    return false;
  }

 private:
  struct Frame {
    bool object;
    std::string path;
    std::size_t index = 0;
    std::string key;
    std::size_t key_offset = 0;
  };

  std::size_t here() const {
    const std::size_t off = static_cast<std::size_t>(*furthest_ - base_);
    return off > 0 ? off - 1 : 0;
  }

  std::string next_path(std::size_t& offset) {
    offset = here();
    if (stack_.empty()) return "";
    Frame& top = stack_.back();
    if (top.object) {
      offset = top.key_offset;
      return top.path + "/" + escape_pointer(top.key);
    }
    return top.path + "/" + std::to_string(top.index++);
  }

  bool value() {
    std::size_t off = 0;
    const std::string path = next_path(off);
    offsets.emplace(path, off);
    return true;
  }
  bool open(bool object) {
    std::size_t off = 0;
    std::string path = next_path(off);
    offsets.emplace(path, off);
    stack_.push_back(Frame{object, std::move(path), 0, {}, 0});
    return true;
  }
  bool close() {
    if (!stack_.empty()) stack_.pop_back();
    return true;
  }

  const char* base_;
  const char** furthest_;
  std::vector<Frame> stack_;
};

Diagnostic located(std::string code, std::string message, Position pos,
                   std::vector<std::string> subjects = {}) {
  Diagnostic d{std::move(code), std::move(message), std::move(subjects)};
  d.line = pos.line;
  d.column = pos.column;
  return d;
}

class Reader {
 public:
  Reader(std::string_view text, const std::map<std::string, std::size_t>& offsets)
      : text_(text), offsets_(offsets) {}

  Diagnostics diags;

  Position where(std::string ptr) const {
    while (true) {
      auto it = offsets_.find(ptr);
      if (it != offsets_.end()) return position_at(text_, it->second);
      if (ptr.empty()) return Position{1, 1};
      ptr = ptr.substr(0, ptr.rfind('/'));
    }
  }

  void error(const std::string& ptr, const std::string& message) {
    diags.push_back(located("SchemaError", (ptr.empty() ? "/" : ptr) + ": " + message, where(ptr)));
  }

  bool object(const json& j, const std::string& ptr, std::initializer_list<const char*> allowed,
              std::initializer_list<const char*> required = {}) {
    if (!j.is_object()) {
      error(ptr, "expected an object");
      return false;
    }
    bool ok = true;
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (std::none_of(allowed.begin(), allowed.end(),
                       [&](const char* a) { return it.key() == a; })) {
        error(ptr + "/" + escape_pointer(it.key()), "unknown key '" + it.key() + "'");
        ok = false;
      }
    }
    for (const char* r : required) {
      if (!j.contains(r)) {
        error(ptr, std::string("missing required key '") + r + "'");
        ok = false;
      }
    }
    return ok;
  }

  std::optional<double> number(const json& j, const std::string& ptr) {
    if (!j.is_number()) {
      error(ptr, "expected a number");
      return std::nullopt;
    }
    return j.get<double>();
  }

  std::optional<std::size_t> count(const json& j, const std::string& ptr) {
    if (j.is_number_unsigned()) return j.get<std::size_t>();
    error(ptr, "expected a non-negative integer");
    return std::nullopt;
  }

  std::optional<std::string> string(const json& j, const std::string& ptr) {
    if (!j.is_string()) {
      error(ptr, "expected a string");
      return std::nullopt;
    }
    return j.get<std::string>();
  }

  template <typename E>
  std::optional<E> choice(const json& j, const std::string& ptr,
                          std::initializer_list<std::pair<const char*, E>> options) {
    auto s = string(j, ptr);
    if (!s) return std::nullopt;
    for (const auto& [name, value] : options)
      if (*s == name) return value;
    std::string names;
    for (const auto& o : options) names += (names.empty() ? "" : ", ") + std::string(o.first);
    error(ptr, "unknown value '" + *s + "' (expected one of " + names + ")");
    return std::nullopt;
  }

  // A number or a flat numeric array.
  std::optional<std::vector<double>> vector(const json& j, const std::string& ptr) {
    if (j.is_number()) return std::vector<double>{j.get<double>()};
    if (!j.is_array()) {
      error(ptr, "expected a number or an array of numbers");
      return std::nullopt;
    }
    std::vector<double> v;
    for (std::size_t i = 0; i < j.size(); ++i) {
      auto x = number(j[i], ptr + "/" + std::to_string(i));
      if (!x) return std::nullopt;
      v.push_back(*x);
    }
    return v;
  }

  // Nested row arrays, rectangular and non-empty.
  std::optional<Matrix> matrix(const json& j, const std::string& ptr) {
    if (!j.is_array() || j.empty() || !j[0].is_array() || j[0].empty()) {
      error(ptr, "expected a non-empty matrix (array of rows)");
      return std::nullopt;
    }
    const std::size_t cols = j[0].size();
    Matrix m(j.size(), cols);
    for (std::size_t r = 0; r < j.size(); ++r) {
      const std::string rp = ptr + "/" + std::to_string(r);
      if (!j[r].is_array() || j[r].size() != cols) {
        error(rp, "matrix rows must all have " + std::to_string(cols) + " entries");
        return std::nullopt;
      }
      for (std::size_t c = 0; c < cols; ++c) {
        auto x = number(j[r][c], rp + "/" + std::to_string(c));
        if (!x) return std::nullopt;
        m(r, c) = *x;
      }
    }
    return m;
  }

  std::optional<PortRef> port_ref(const json& j, const std::string& ptr) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_string()) {
      error(ptr, "expected [block id, port]");
      return std::nullopt;
    }
    auto port = count(j[1], ptr + "/1");
    if (!port) return std::nullopt;
    return PortRef{j[0].get<std::string>(), *port};
  }

 private:
  std::string_view text_;
  const std::map<std::string, std::size_t>& offsets_;
};

#define PB_FIELD(var, expr) \
  auto var = (expr);        \
  if (!var) return std::nullopt

std::optional<BlockKind> read_params(Reader& rd, const std::string& kind, const json& params,
                                     const std::string& ptr) {
  auto p = [&](const char* key) { return ptr + "/" + key; };
  auto has = [&](const char* key) { return params.contains(key); };

  if (kind == "Inport") {
    if (!rd.object(params, ptr, {"dim"})) return std::nullopt;
    std::size_t dim = 1;
    if (has("dim")) {
      PB_FIELD(d, rd.count(params["dim"], p("dim")));
      dim = *d;
    }
    return blocks::Inport{dim};
  }
  if (kind == "Outport" || kind == "Transpose" || kind == "Scope" || kind == "InfNorm" ||
      kind == "RunningMax") {
    if (!rd.object(params, ptr, {})) return std::nullopt;
    if (kind == "Outport") return blocks::Outport{};
    if (kind == "Transpose") return blocks::Transpose{};
    if (kind == "Scope") return blocks::Scope{};
    if (kind == "InfNorm") return blocks::InfNorm{};
    return blocks::RunningMax{};
  }
  if (kind == "Constant") {
    if (!rd.object(params, ptr, {"value"}, {"value"})) return std::nullopt;
    PB_FIELD(v, rd.vector(params["value"], p("value")));
    return blocks::Constant{*v};
  }
  if (kind == "Gain") {
    if (!rd.object(params, ptr, {"gain", "mode"}, {"gain"})) return std::nullopt;
    const json& g = params["gain"];
    const bool nested = g.is_array() && !g.empty() && g[0].is_array();
    GainMode mode = nested ? GainMode::Matrix : GainMode::Elementwise;
    if (has("mode")) {
      PB_FIELD(m, rd.choice<GainMode>(params["mode"], p("mode"),
                                      {{"elementwise", GainMode::Elementwise},
                                       {"matrix", GainMode::Matrix}}));
      mode = *m;
    }
    Matrix gain;
    if (nested) {
      PB_FIELD(m, rd.matrix(g, p("gain")));
      gain = *m;
    } else {
      PB_FIELD(v, rd.vector(g, p("gain")));
      if (v->empty()) {
        rd.error(p("gain"), "gain must be non-empty");
        return std::nullopt;
      }
      gain = Matrix::column(*v);
    }
    return blocks::Gain{gain, mode};
  }
  if (kind == "Sum") {
    if (!rd.object(params, ptr, {"signs"}, {"signs"})) return std::nullopt;
    PB_FIELD(s, rd.string(params["signs"], p("signs")));
    return blocks::Sum{*s};
  }
  if (kind == "Product") {
    if (!rd.object(params, ptr, {"mode"})) return std::nullopt;
    ProductMode mode = ProductMode::Elementwise;
    if (has("mode")) {
      PB_FIELD(m, rd.choice<ProductMode>(params["mode"], p("mode"),
                                         {{"elementwise", ProductMode::Elementwise},
                                          {"matrix", ProductMode::Matrix},
                                          {"dot", ProductMode::Dot}}));
      mode = *m;
    }
    return blocks::Product{mode};
  }
  if (kind == "Integrator" || kind == "UnitDelay") {
    if (!rd.object(params, ptr, {"initial"}, {"initial"})) return std::nullopt;
    PB_FIELD(v, rd.vector(params["initial"], p("initial")));
    if (kind == "Integrator") return blocks::Integrator{*v};
    return blocks::UnitDelay{*v};
  }
  if (kind == "StateSpace") {
    if (!rd.object(params, ptr, {"A", "B", "C", "D"}, {"A", "B", "C", "D"})) return std::nullopt;
    PB_FIELD(a, rd.matrix(params["A"], p("A")));
    PB_FIELD(b, rd.matrix(params["B"], p("B")));
    PB_FIELD(c, rd.matrix(params["C"], p("C")));
    PB_FIELD(d, rd.matrix(params["D"], p("D")));
    return blocks::StateSpace{*a, *b, *c, *d};
  }
  if (kind == "NoiseSource") {
    if (!rd.object(params, ptr, {"kind", "bound", "dim"}, {"kind"})) return std::nullopt;
    PB_FIELD(k, rd.choice<NoiseKind>(params["kind"], p("kind"),
                                     {{"zero", NoiseKind::Zero},
                                      {"unit_peak_uniform", NoiseKind::UnitPeakUniform},
                                      {"bounded_power", NoiseKind::BoundedPower}}));
    blocks::NoiseSource n{{*k, 0.0}, 1};
    if (has("bound")) {
      PB_FIELD(b, rd.number(params["bound"], p("bound")));
      n.noise.bound = *b;
    }
    if (has("dim")) {
      PB_FIELD(d, rd.count(params["dim"], p("dim")));
      n.dim = *d;
    }
    return n;
  }
  if (kind == "PolyFun") {
    if (!rd.object(params, ptr, {"coefficients"}, {"coefficients"})) return std::nullopt;
    PB_FIELD(v, rd.vector(params["coefficients"], p("coefficients")));
    return blocks::PolyFun{*v};
  }
  if (kind == "QuadraticForm") {
    if (!rd.object(params, ptr, {"P"}, {"P"})) return std::nullopt;
    PB_FIELD(m, rd.matrix(params["P"], p("P")));
    return blocks::QuadraticForm{*m};
  }
  if (kind == "AssertLE0") {
    if (!rd.object(params, ptr,
                   {"tolerance", "check", "label", "storage", "from_step", "rate_tolerance"}))
      return std::nullopt;
    blocks::AssertLE0 a;
    if (has("tolerance")) {
      PB_FIELD(t, rd.number(params["tolerance"], p("tolerance")));
      a.tolerance = *t;
    }
    if (has("check")) {
      PB_FIELD(c, rd.choice<AssertCheck>(params["check"], p("check"),
                                         {{"value", AssertCheck::Value},
                                          {"monotone_decreasing", AssertCheck::MonotoneDecreasing}}));
      a.check = *c;
    }
    if (has("label")) {
      PB_FIELD(l, rd.string(params["label"], p("label")));
      a.label = *l;
    }
    if (has("storage")) {
      PB_FIELD(s, rd.string(params["storage"], p("storage")));
      a.storage = *s;
    }
    if (has("from_step")) {
      PB_FIELD(f, rd.count(params["from_step"], p("from_step")));
      a.from_step = *f;
    }
    if (has("rate_tolerance")) {
      PB_FIELD(r, rd.number(params["rate_tolerance"], p("rate_tolerance")));
      a.rate_tolerance = *r;
    }
    return a;
  }
  if (kind == "Mux") {
    if (!rd.object(params, ptr, {"inputs"}, {"inputs"})) return std::nullopt;
    PB_FIELD(n, rd.count(params["inputs"], p("inputs")));
    return blocks::Mux{*n};
  }
  if (kind == "Selector") {
    if (!rd.object(params, ptr, {"indices"}, {"indices"})) return std::nullopt;
    const json& ix = params["indices"];
    if (!ix.is_array()) {
      rd.error(p("indices"), "expected an array of indices");
      return std::nullopt;
    }
    blocks::Selector s;
    for (std::size_t i = 0; i < ix.size(); ++i) {
      PB_FIELD(v, rd.count(ix[i], p("indices") + "/" + std::to_string(i)));
      s.indices.push_back(*v);
    }
    return s;
  }
  return std::nullopt;
}

const std::vector<const char*>& known_kinds() {
  static const std::vector<const char*> kinds{
      "Inport",  "Outport",     "Constant",    "Gain",          "Sum",       "Product",
      "Integrator", "UnitDelay", "StateSpace", "NoiseSource",  "PolyFun",   "Transpose",
      "QuadraticForm", "AssertLE0", "Scope",   "Mux",           "Selector",  "InfNorm",
      "RunningMax"};
  return kinds;
}

std::optional<Block> read_block(Reader& rd, const json& j, const std::string& ptr) {
  if (!rd.object(j, ptr, {"id", "kind", "params", "region"}, {"id", "kind"})) return std::nullopt;
  PB_FIELD(id, rd.string(j["id"], ptr + "/id"));
  PB_FIELD(kind, rd.string(j["kind"], ptr + "/kind"));
  if (id->empty()) {
    rd.error(ptr + "/id", "block id must be non-empty");
    return std::nullopt;
  }
  const auto& kinds = known_kinds();
  if (std::none_of(kinds.begin(), kinds.end(), [&](const char* k) { return *kind == k; })) {
    rd.error(ptr + "/kind", "unknown block kind '" + *kind + "'");
    return std::nullopt;
  }
  Region region = Region::Executable;
  if (j.contains("region")) {
    PB_FIELD(r, rd.choice<Region>(j["region"], ptr + "/region",
                                  {{"executable", Region::Executable},
                                   {"annotation", Region::Annotation}}));
    region = *r;
  }
  static const json empty = json::object();
  PB_FIELD(k, read_params(rd, *kind, j.contains("params") ? j["params"] : empty,
                          ptr + "/params"));
  return Block{*id, *k, region};
}

std::optional<Wire> read_wire(Reader& rd, const json& j, const std::string& ptr) {
  if (!rd.object(j, ptr, {"src", "dst", "marker"}, {"src", "dst"})) return std::nullopt;
  PB_FIELD(src, rd.port_ref(j["src"], ptr + "/src"));
  PB_FIELD(dst, rd.port_ref(j["dst"], ptr + "/dst"));
  WireMarker marker = WireMarker::Plain;
  if (j.contains("marker")) {
    PB_FIELD(m, rd.choice<WireMarker>(j["marker"], ptr + "/marker",
                                      {{"plain", WireMarker::Plain}, {"state", WireMarker::State}}));
    marker = *m;
  }
  return Wire{*src, *dst, marker};
}

void read_graph_body(Reader& rd, const json& j, const std::string& ptr, ModelGraph& g) {
  if (j.contains("blocks")) {
    const json& bs = j["blocks"];
    if (!bs.is_array()) {
      rd.error(ptr + "/blocks", "expected an array");
    } else {
      for (std::size_t i = 0; i < bs.size(); ++i)
        if (auto b = read_block(rd, bs[i], ptr + "/blocks/" + std::to_string(i)))
          g.blocks.push_back(std::move(*b));
    }
  }
  if (j.contains("wires")) {
    const json& ws = j["wires"];
    if (!ws.is_array()) {
      rd.error(ptr + "/wires", "expected an array");
    } else {
      for (std::size_t i = 0; i < ws.size(); ++i)
        if (auto w = read_wire(rd, ws[i], ptr + "/wires/" + std::to_string(i)))
          g.wires.push_back(std::move(*w));
    }
  }
}

std::optional<AnnotationSpec> read_annotation(Reader& rd, const json& j, const std::string& ptr) {
  if (!rd.object(j, ptr,
                 {"kind", "P", "noise", "states", "alpha", "w", "y", "theta_max", "gamma_adapt",
                  "x_tilde", "graph", "bindings"},
                 {"kind"}))
    return std::nullopt;
  auto p = [&](const char* key) { return ptr + "/" + key; };
  PB_FIELD(kind, rd.choice<AnnotationKind>(j["kind"], p("kind"),
                                           {{"stability", AnnotationKind::Stability},
                                            {"l2gain", AnnotationKind::L2Gain},
                                            {"l1_bound", AnnotationKind::L1PerfBound},
                                            {"manual", AnnotationKind::Manual}}));
  AnnotationSpec s;
  s.kind = *kind;
  if (j.contains("P")) {
    PB_FIELD(m, rd.matrix(j["P"], p("P")));
    s.p = *m;
  }
  if (j.contains("noise")) {
    const json& n = j["noise"];
    if (!rd.object(n, p("noise"), {"kind", "bound"}, {"kind"})) return std::nullopt;
    PB_FIELD(k, rd.choice<NoiseKind>(n["kind"], p("noise") + "/kind",
                                     {{"zero", NoiseKind::Zero},
                                      {"unit_peak_uniform", NoiseKind::UnitPeakUniform},
                                      {"bounded_power", NoiseKind::BoundedPower}}));
    NoiseSpec ns{*k, 0.0};
    if (n.contains("bound")) {
      PB_FIELD(b, rd.number(n["bound"], p("noise") + "/bound"));
      ns.bound = *b;
    }
    s.noise = ns;
  }
  if (j.contains("states")) {
    const json& st = j["states"];
    if (!st.is_array()) {
      rd.error(p("states"), "expected an array of [block id, port]");
      return std::nullopt;
    }
    for (std::size_t i = 0; i < st.size(); ++i) {
      PB_FIELD(r, rd.port_ref(st[i], p("states") + "/" + std::to_string(i)));
      s.states.push_back(*r);
    }
  }
  auto opt_number = [&](const char* key, std::optional<double>& out) {
    if (!j.contains(key)) return true;
    out = rd.number(j[key], p(key));
    return out.has_value();
  };
  auto opt_ref = [&](const char* key, std::optional<PortRef>& out) {
    if (!j.contains(key)) return true;
    out = rd.port_ref(j[key], p(key));
    return out.has_value();
  };
  if (!opt_number("alpha", s.alpha) || !opt_number("theta_max", s.theta_max) ||
      !opt_number("gamma_adapt", s.gamma_adapt) || !opt_ref("w", s.w) || !opt_ref("y", s.y) ||
      !opt_ref("x_tilde", s.x_tilde))
    return std::nullopt;
  if (j.contains("graph")) {
    const json& gj = j["graph"];
    if (!rd.object(gj, p("graph"), {"blocks", "wires"}, {"blocks"})) return std::nullopt;
    ModelGraph g;
    read_graph_body(rd, gj, p("graph"), g);
    s.manual_graph = std::move(g);
  }
  if (j.contains("bindings")) {
    const json& b = j["bindings"];
    if (!b.is_object()) {
      rd.error(p("bindings"), "expected an object");
      return std::nullopt;
    }
    for (auto it = b.begin(); it != b.end(); ++it) {
      PB_FIELD(r, rd.port_ref(it.value(), p("bindings") + "/" + escape_pointer(it.key())));
      s.bindings.emplace(it.key(), *r);
    }
  }
  return s;
}

#undef PB_FIELD

// ---- printing ----

json ref_json(const PortRef& r) { return json::array({r.block, r.port}); }

const char* noise_name(NoiseKind k) { return to_string(k); }

json params_json(const BlockKind& kind) {
  json p = json::object();
  std::visit(
      [&](const auto& k) {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, blocks::Inport>) {
          p["dim"] = k.dim;
        } else if constexpr (std::is_same_v<T, blocks::Constant>) {
          p["value"] = detail::vector_to_json(k.value);
        } else if constexpr (std::is_same_v<T, blocks::Gain>) {
          if (k.mode == GainMode::Matrix) {
            p["gain"] = detail::matrix_to_json(k.gain);
            p["mode"] = "matrix";
          } else {
            if (k.gain.size() == 1) p["gain"] = k.gain(0, 0);
            else p["gain"] = detail::vector_to_json(k.gain.data());
            p["mode"] = "elementwise";
          }
        } else if constexpr (std::is_same_v<T, blocks::Sum>) {
          p["signs"] = k.signs;
        } else if constexpr (std::is_same_v<T, blocks::Product>) {
          p["mode"] = k.mode == ProductMode::Dot      ? "dot"
                      : k.mode == ProductMode::Matrix ? "matrix"
                                                      : "elementwise";
        } else if constexpr (std::is_same_v<T, blocks::Integrator> ||
                             std::is_same_v<T, blocks::UnitDelay>) {
          p["initial"] = detail::vector_to_json(k.initial);
        } else if constexpr (std::is_same_v<T, blocks::StateSpace>) {
          p["A"] = detail::matrix_to_json(k.a);
          p["B"] = detail::matrix_to_json(k.b);
          p["C"] = detail::matrix_to_json(k.c);
          p["D"] = detail::matrix_to_json(k.d);
        } else if constexpr (std::is_same_v<T, blocks::NoiseSource>) {
          p["kind"] = noise_name(k.noise.kind);
          p["bound"] = k.noise.bound;
          p["dim"] = k.dim;
        } else if constexpr (std::is_same_v<T, blocks::PolyFun>) {
          p["coefficients"] = detail::vector_to_json(k.coefficients);
        } else if constexpr (std::is_same_v<T, blocks::QuadraticForm>) {
          p["P"] = detail::matrix_to_json(k.p);
        } else if constexpr (std::is_same_v<T, blocks::AssertLE0>) {
          p["tolerance"] = k.tolerance;
          p["check"] = k.check == AssertCheck::Value ? "value" : "monotone_decreasing";
          p["label"] = k.label;
          p["storage"] = k.storage;
          p["from_step"] = k.from_step;
          p["rate_tolerance"] = k.rate_tolerance;
        } else if constexpr (std::is_same_v<T, blocks::Mux>) {
          p["inputs"] = k.inputs;
        } else if constexpr (std::is_same_v<T, blocks::Selector>) {
          json ix = json::array();
          for (std::size_t i : k.indices) ix.push_back(i);
          p["indices"] = ix;
        }
      },
      kind);
  return p;
}

json graph_body_json(const ModelGraph& g) {
  std::vector<const Block*> sorted;
  for (const auto& b : g.blocks) sorted.push_back(&b);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const Block* a, const Block* b) { return a->id < b->id; });
  json blocks_j = json::array();
  for (const Block* b : sorted) {
    json bj = {{"id", b->id}, {"kind", kind_name(b->kind)}, {"region", to_string(b->region)}};
    json params = params_json(b->kind);
    if (!params.empty()) bj["params"] = std::move(params);
    blocks_j.push_back(std::move(bj));
  }
  std::vector<const Wire*> wires;
  for (const auto& w : g.wires) wires.push_back(&w);
  std::stable_sort(wires.begin(), wires.end(), [](const Wire* a, const Wire* b) {
    return std::tie(a->dst, a->src) < std::tie(b->dst, b->src);
  });
  json wires_j = json::array();
  for (const Wire* w : wires) {
    wires_j.push_back({{"src", ref_json(w->src)},
                       {"dst", ref_json(w->dst)},
                       {"marker", w->marker == WireMarker::State ? "state" : "plain"}});
  }
  return {{"blocks", blocks_j}, {"wires", wires_j}};
}

json annotation_json(const AnnotationSpec& s) {
  json j = {{"kind", to_string(s.kind)}};
  if (s.p) j["P"] = detail::matrix_to_json(*s.p);
  if (s.noise) j["noise"] = {{"kind", noise_name(s.noise->kind)}, {"bound", s.noise->bound}};
  if (!s.states.empty()) {
    json st = json::array();
    for (const auto& r : s.states) st.push_back(ref_json(r));
    j["states"] = st;
  }
  if (s.alpha) j["alpha"] = *s.alpha;
  if (s.w) j["w"] = ref_json(*s.w);
  if (s.y) j["y"] = ref_json(*s.y);
  if (s.theta_max) j["theta_max"] = *s.theta_max;
  if (s.gamma_adapt) j["gamma_adapt"] = *s.gamma_adapt;
  if (s.x_tilde) j["x_tilde"] = ref_json(*s.x_tilde);
  if (s.manual_graph) j["graph"] = graph_body_json(*s.manual_graph);
  if (!s.bindings.empty()) {
    json b = json::object();
    for (const auto& [name, r] : s.bindings) b[name] = ref_json(r);
    j["bindings"] = b;
  }
  return j;
}

std::string dot_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

bool specs_equal(const AnnotationSpec& a, const AnnotationSpec& b) {
  if (a.manual_graph.has_value() != b.manual_graph.has_value()) return false;
  if (a.manual_graph && !structurally_equal(*a.manual_graph, *b.manual_graph)) return false;
  return a.kind == b.kind && a.p == b.p && a.noise == b.noise && a.states == b.states &&
         a.alpha == b.alpha && a.w == b.w && a.y == b.y && a.theta_max == b.theta_max &&
         a.gamma_adapt == b.gamma_adapt && a.x_tilde == b.x_tilde && a.bindings == b.bindings;
}

}  // namespace

const char* to_string(AnnotationKind kind) {
  switch (kind) {
    case AnnotationKind::Stability: return "stability";
    case AnnotationKind::L2Gain: return "l2gain";
    case AnnotationKind::L1PerfBound: return "l1_bound";
    case AnnotationKind::Manual: return "manual";
  }
  return "?";
}

std::string format_double(double v) {
  if (!std::isfinite(v)) throw Error(ErrorCode::NonfiniteSignal, "cannot print non-finite number");
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s = buf;
  if (s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

ModelDocument parse_model(std::string_view text) {
  const char* furthest = text.data();
  PositionRecorder recorder(text.data(), &furthest);
  const bool ok = json::sax_parse(CountingIterator(text.data(), &furthest),
                                  CountingIterator(text.data() + text.size(), &furthest),
                                  &recorder);
  if (!ok || recorder.error_offset) {
    const std::size_t off = recorder.error_offset.value_or(text.size());
    std::string msg = recorder.error_message.empty() ? "malformed JSON" : recorder.error_message;
    throw DiagnosticError({located("SyntaxError", msg, position_at(text, off))});
  }
  const json root = json::parse(text.begin(), text.end());

  Reader rd(text, recorder.offsets);
  ModelDocument doc;
  if (rd.object(root, "",
                {"version", "blocks", "wires", "annotations", "sample_time", "metadata",
                 "provenance"},
                {"version", "blocks"})) {
    if (auto v = rd.string(root["version"], "/version")) {
      if (*v != "1") rd.error("/version", "unsupported version '" + *v + "' (expected \"1\")");
      doc.version = *v;
    }
    read_graph_body(rd, root, "", doc.graph);
    if (root.contains("sample_time") && !root["sample_time"].is_null()) {
      if (auto h = rd.number(root["sample_time"], "/sample_time")) doc.graph.sample_time = *h;
    }
    if (root.contains("metadata")) {
      const json& m = root["metadata"];
      if (!m.is_object()) {
        rd.error("/metadata", "expected an object of strings");
      } else {
        for (auto it = m.begin(); it != m.end(); ++it)
          if (auto s = rd.string(it.value(), "/metadata/" + escape_pointer(it.key())))
            doc.graph.metadata.emplace(it.key(), *s);
      }
    }
    if (root.contains("annotations")) {
      const json& a = root["annotations"];
      if (!a.is_array()) {
        rd.error("/annotations", "expected an array");
      } else {
        for (std::size_t i = 0; i < a.size(); ++i)
          if (auto s = read_annotation(rd, a[i], "/annotations/" + std::to_string(i)))
            doc.annotations.push_back(std::move(*s));
      }
    }
  }
  if (!rd.diags.empty()) throw DiagnosticError(std::move(rd.diags));

  Diagnostics semantic;
  for (const auto& d : validate(doc.graph)) {
    std::string ptr;
    for (const auto& subject : d.subjects) {
      for (std::size_t i = 0; i < doc.graph.blocks.size() && ptr.empty(); ++i)
        if (doc.graph.blocks[i].id == subject) ptr = "/blocks/" + std::to_string(i);
      for (std::size_t i = 0; i < doc.graph.wires.size() && ptr.empty(); ++i)
        if (doc.graph.wires[i].src.block == subject || doc.graph.wires[i].dst.block == subject)
          ptr = "/wires/" + std::to_string(i);
      if (!ptr.empty()) break;
    }
    Diagnostic s = located("SemanticError", d.code + ": " + d.message, rd.where(ptr), d.subjects);
    s.severity = d.severity;
    semantic.push_back(std::move(s));
  }
  if (has_errors(semantic)) throw DiagnosticError(std::move(semantic));
  return doc;
}

std::string print_model(const ModelDocument& doc) {
  json root = graph_body_json(doc.graph);
  root["version"] = doc.version;
  if (doc.graph.sample_time) root["sample_time"] = *doc.graph.sample_time;
  if (!doc.graph.metadata.empty()) root["metadata"] = doc.graph.metadata;
  json annotations = json::array();
  for (const auto& s : doc.annotations) annotations.push_back(annotation_json(s));
  root["annotations"] = annotations;
  return detail::write_canonical_json(root);
}

std::string render_dot(const ModelDocument& doc) {
  const ModelGraph& g = doc.graph;
  std::string out = "digraph " + dot_quote(g.name()) + " {\n";
  out += "  rankdir=LR;\n  node [shape=box, fontname=\"Helvetica\"];\n";
  std::vector<const Block*> sorted;
  for (const auto& b : g.blocks) sorted.push_back(&b);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const Block* a, const Block* b) { return a->id < b->id; });
  for (const Block* b : sorted) {
    const bool anno = b->region == Region::Annotation;
    out += "  " + dot_quote(b->id) + " [label=" + dot_quote(b->id + "\n" + kind_name(b->kind)) +
           (anno ? ", color=red, fontcolor=red" : ", color=black") + "];\n";
  }
  for (const auto& w : g.wires) {
    const Block* src = g.find(w.src.block);
    const bool anno = src && src->region == Region::Annotation;
    std::string attrs;
    if (w.marker == WireMarker::State) attrs = "penwidth=3, label=\"x(t)\"";
    if (anno) attrs += std::string(attrs.empty() ? "" : ", ") + "color=red";
    out += "  " + dot_quote(w.src.block) + " -> " + dot_quote(w.dst.block);
    if (!attrs.empty()) out += " [" + attrs + "]";
    out += ";\n";
  }
  out += "}\n";
  return out;
}

bool documents_equal(const ModelDocument& a, const ModelDocument& b) {
  if (a.version != b.version || !structurally_equal(a.graph, b.graph)) return false;
  if (a.annotations.size() != b.annotations.size()) return false;
  for (std::size_t i = 0; i < a.annotations.size(); ++i)
    if (!specs_equal(a.annotations[i], b.annotations[i])) return false;
  return true;
}

}  // namespace proofblocks
