#include "proofblocks/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <regex>
#include <set>
#include <sstream>

#include "json_io.hpp"
#include "proofblocks/annotator.hpp"
#include "proofblocks/backend.hpp"
#include "proofblocks/extraction.hpp"
#include "proofblocks/frontend.hpp"
#include "proofblocks/graph.hpp"
#include "proofblocks/pipeline.hpp"
#include "proofblocks/simcheck.hpp"

namespace proofblocks::cli {
namespace {

using detail::json;
namespace fs = std::filesystem;

struct Options {
  std::string model;
  std::string out = ".";
  std::optional<double> h;
  double gamma_margin = 1.01;
  double q = 1.0;
  double horizon = 10.0;
  double h_sim = 1e-3;
  std::uint64_t seed = 0;
  std::string seeds;
  std::string target;
  std::vector<std::string> imports;
};

// Stops the current subcommand with an exit code; the message is already printed.
struct Stop {
  int code;
};

bool is_proof_failure(ErrorCode c) {
  return c == ErrorCode::NotStable || c == ErrorCode::SingularOperator ||
         c == ErrorCode::InfeasibleGain || c == ErrorCode::UnverifiedCertificate;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::PreconditionViolation, "cannot read '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string file_stem(const ModelGraph& g) {
  std::string s = g.name();
  for (char& c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) c = '_';
  return s;
}

double tolerance_scale() {
  const char* raw = std::getenv("PROOFBLOCKS_TOLERANCE_SCALE");
  return raw && *raw ? std::strtod(raw, nullptr) : 1.0;
}

bool kind_fits(AnnotationKind spec, CertificateKind cert) {
  if (spec == AnnotationKind::L2Gain) return cert == CertificateKind::L2Gain;
  return spec == AnnotationKind::Stability && cert != CertificateKind::L2Gain;
}

json matrix_json(const Matrix& m) { return m.empty() ? json::array() : detail::matrix_to_json(m); }

json certificate_json(const Certificate& c) { return json::parse(export_certificate(c)); }

class Session {
 public:
  Session(std::string command, std::set<std::string> flags, Options o, std::ostream& out,
          std::ostream& err)
      : command_(std::move(command)), flags_(std::move(flags)), o_(std::move(o)), out_(out),
        err_(err) {}

  int run() {
    try {
      tol_ = Tolerances::from_environment();
    } catch (const Error& e) {
      err_ << e.what() << "\n";
      return kUsage;
    }
    try {
      fs::create_directories(o_.out);
      load();
      if (command_ == "check") check();
      else if (command_ == "extract") extract(false);
      else if (command_ == "certify") certify();
      else if (command_ == "annotate") annotate();
      else if (command_ == "render") render();
      else if (command_ == "discretize") discretize();
      else if (command_ == "codegen") codegen();
      else if (command_ == "simulate") simulate();
      else if (command_ == "pipeline") pipeline();
    } catch (const Stop& s) {
      return s.code;
    } catch (const DiagnosticError& e) {
      for (const auto& d : e.diagnostics()) err_ << command_ << ": " << d.format() << "\n";
      return kDiagnostics;
    } catch (const Error& e) {
      err_ << command_ << ": " << e.what() << "\n";
      return is_proof_failure(e.code()) ? kRefuted : kDiagnostics;
    } catch (const std::exception& e) {
      err_ << command_ << ": " << e.what() << "\n";
      return kDiagnostics;
    }
    return status_;
  }

 private:
  json provenance() const {
    json p;
    p["tool"] = "proofblocks";
    p["command"] = command_;
    p["input"] = o_.model;
    p["tolerance_scale"] = tolerance_scale();
    if (flags_.count("h") && o_.h) p["h"] = *o_.h;
    if (flags_.count("gamma_margin")) p["gamma_margin"] = o_.gamma_margin;
    if (flags_.count("q")) p["q"] = o_.q;
    if (flags_.count("import")) p["import"] = o_.imports;
    if (flags_.count("horizon")) p["horizon"] = o_.horizon;
    if (flags_.count("h_sim")) p["h_sim"] = o_.h_sim;
    if (flags_.count("seed")) {
      if (o_.seeds.empty()) p["seed"] = o_.seed;
      else p["seeds"] = {seed_list().front(), seed_list().back()};
    }
    return p;
  }

  void write(const std::string& name, const std::string& text) {
    const fs::path path = fs::path(o_.out) / name;
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!(f << text)) throw Error(ErrorCode::PreconditionViolation, "cannot write '" + path.string() + "'");
    out_ << "wrote " << path.string() << "\n";
  }

  void write_json(const std::string& name, json j) {
    j["provenance"] = provenance();
    write(name, detail::write_canonical_json(j));
  }

  void warn(const Diagnostics& ds) {
    for (const auto& d : ds) err_ << command_ << ": " << d.format() << "\n";
  }

  void load() {
    doc_ = parse_model(read_text(o_.model));
    stem_ = file_stem(doc_.graph);
  }

  std::vector<std::uint64_t> seed_list() const {
    if (o_.seeds.empty()) return {o_.seed};
    static const std::regex re(R"((\d+)\.\.(\d+))");
    std::smatch m;
    std::vector<std::uint64_t> s;
    if (std::regex_match(o_.seeds, m, re)) {
      const auto a = std::stoull(m[1]), b = std::stoull(m[2]);
      for (auto i = a; i <= b && s.size() < 100000; ++i) s.push_back(i);
    }
    return s;
  }

  Matrix lyapunov_q() const {
    if (o_.q == 1.0) return {};
    try {
      const std::size_t n = extract_state_space(subgraph(doc_.graph, Region::Executable)).n();
      return Matrix::identity(n) * o_.q;
    } catch (const Error&) {
      return {};
    }
  }

  // ---- stages ----------------------------------------------------------------

  void check() {
    const Diagnostics diags = validate(doc_.graph);
    warn(diags);
    if (has_errors(diags)) throw Stop{kDiagnostics};
    infer_dimensions(doc_.graph);
    std::size_t anno = 0;
    for (const auto& b : doc_.graph.blocks) anno += b.region == Region::Annotation;
    out_ << "check: " << doc_.graph.name() << ": " << doc_.graph.blocks.size() << " blocks ("
         << anno << " annotation), " << doc_.graph.wires.size() << " wires, "
         << doc_.annotations.size() << " annotation specs, "
         << (doc_.graph.is_discrete() ? "discrete h = " + format_double(*doc_.graph.sample_time)
                                      : std::string("continuous"))
         << "\n";
  }

  void extract(bool optional) {
    StateSpaceModel ss;
    try {
      ss = extract_state_space(subgraph(doc_.graph, Region::Executable));
    } catch (const Error& e) {
      if (!optional || e.code() != ErrorCode::NonlinearBlock) throw;
      err_ << command_ << ": extract skipped: " << e.what() << "\n";
      return;
    }
    AnalysisRequest req;
    req.ss = ss;
    for (const auto& s : doc_.annotations) {
      if (s.kind == AnnotationKind::Stability) req.requested.push_back("lyapunov");
      if (s.kind == AnnotationKind::L2Gain) req.requested.push_back("l2gain");
      if (!req.noise && s.noise && s.w) {
        req.noise = s.noise;
        req.noise_binding = s.w->block;
      }
    }
    out_ << "states " << ss.n() << ", inputs " << ss.m() << ", outputs " << ss.p() << "\n";
    out_ << "A = " << ss.a.to_string() << "\nB = " << ss.b.to_string()
         << "\nC = " << ss.c.to_string() << "\nD = " << ss.d.to_string() << "\n";
    write_json(stem_ + ".request.json", json::parse(export_analysis_request(req)));
  }

  const std::vector<std::optional<Certificate>>& certs() {
    if (certs_) return *certs_;
    CertifyOptions opt;
    opt.gamma_margin = o_.gamma_margin;
    opt.q = lyapunov_q();
    std::set<std::size_t> taken;
    for (const auto& path : o_.imports) {
      Certificate c = import_certificate(read_text(path));
      std::optional<std::size_t> slot;
      for (std::size_t i = 0; i < doc_.annotations.size() && !slot; ++i)
        if (!taken.count(i) && kind_fits(doc_.annotations[i].kind, c.kind)) slot = i;
      if (!slot)
        throw Error(ErrorCode::PreconditionViolation,
                    "no annotation spec accepts the " + std::string(to_string(c.kind)) +
                        " certificate in '" + path + "'");
      taken.insert(*slot);
      opt.imported[*slot] = c;
    }
    certs_ = certify_annotations(doc_.graph, doc_.annotations, opt, tol_);
    bool refuted = false;
    for (std::size_t i = 0; i < certs_->size(); ++i) {
      const auto& c = (*certs_)[i];
      if (!c) continue;
      out_ << "spec " << i << " (" << to_string(doc_.annotations[i].kind) << "): "
           << to_string(c->kind) << " " << to_string(c->status) << ", residual "
           << format_double(c->residual);
      if (c->alpha) out_ << ", alpha " << format_double(*c->alpha);
      out_ << "\n";
      if (!c->verified()) {
        err_ << command_ << ": spec " << i << ": certificate refuted\n";
        refuted = true;
      }
    }
    if (refuted) refuted_ = true;
    return *certs_;
  }

  void certify() {
    const auto& cs = certs();
    for (std::size_t i = 0; i < cs.size(); ++i)
      if (cs[i]) write_json(stem_ + ".cert." + std::to_string(i) + ".json", certificate_json(*cs[i]));
    if (refuted_) throw Stop{kRefuted};
  }

  const ModelGraph& annotated() {
    if (annotated_) return *annotated_;
    const auto& cs = certs();
    if (refuted_) throw Stop{kRefuted};
    AnnotationResult r = proofblocks::annotate(doc_.graph, doc_.annotations, cs, tol_);
    warn(r.warnings);
    annotated_ = std::move(r.graph);
    return *annotated_;
  }

  ModelDocument annotated_document() {
    ModelDocument d = doc_;
    d.graph = annotated();
    return d;
  }

  void annotate() {
    write_json(stem_ + ".annotated.pbm.json", json::parse(print_model(annotated_document())));
  }

  void render() { write(stem_ + ".dot", render_dot(annotated_document())); }

  const std::pair<ModelGraph, DiscretizationReport>& discretized() {
    if (discretized_) return *discretized_;
    const ModelGraph& g = annotated();
    if (g.is_discrete()) {
      if (o_.h && *o_.h != *g.sample_time)
        throw Error(ErrorCode::PreconditionViolation,
                    "model is discrete with h = " + format_double(*g.sample_time) +
                        ", cannot resample to " + format_double(*o_.h));
      discretized_.emplace(g, discrete_report(g, doc_.annotations, *certs_));
    } else {
      if (!o_.h) {
        err_ << command_ << ": --h is required for a continuous model\n";
        throw Stop{kUsage};
      }
      DiscretizeOptions opt;
      opt.q = lyapunov_q();
      discretized_.emplace(
          discretize_with_proof(g, doc_.annotations, *certs_, *o_.h, opt, tol_));
    }
    warn(discretized_->second.warnings);
    return *discretized_;
  }

  void discretize() {
    const auto& [gd, rep] = discretized();
    ModelDocument d = doc_;
    d.graph = gd;
    write_json(stem_ + ".discrete.pbm.json", json::parse(print_model(d)));

    json j;
    j["h"] = rep.h;
    j["exact"] = rep.exact;
    j["Ad"] = matrix_json(rep.ad);
    j["Bd"] = matrix_json(rep.bd);
    j["certificate_path"] = to_string(rep.certificate_path);
    j["proofs"] = json::array();
    for (const auto& r : rep.proofs) {
      json pj;
      pj["spec"] = r.spec;
      pj["kind"] = to_string(r.kind);
      pj["prefix"] = r.prefix;
      pj["path"] = to_string(r.path);
      if (r.discrete_cert) pj["certificate"] = certificate_json(*r.discrete_cert);
      if (r.level) pj["level"] = *r.level;
      j["proofs"].push_back(pj);
      out_ << r.prefix << " " << to_string(r.path) << "\n";
    }
    j["warnings"] = json::array();
    for (const auto& w : rep.warnings) j["warnings"].push_back({{"code", w.code}, {"message", w.message}});
    write_json(stem_ + ".discretization.json", j);
  }

  void codegen() {
    const auto& [gd, rep] = discretized();
    std::vector<CodeTarget> targets;
    if (o_.target.empty()) targets = {CodeTarget::CLike, CodeTarget::Dataflow};
    else targets = {code_target_from_string(o_.target)};
    const std::string names[] = {stem_ + ".step.c.txt", stem_ + ".lus.txt"};
    for (CodeTarget t : targets)
      write(names[t == CodeTarget::CLike ? 0 : 1], emit_code(gd, rep, t));
  }

  void simulate() {
    const ModelGraph& g = o_.h ? discretized().first : annotated();
    const auto seeds = seed_list();
    struct Run {
      Trace trace;
      CheckReport report;
    };
    auto job = [&](std::uint64_t seed) {
      SimConfig cfg;
      cfg.horizon = o_.horizon;
      cfg.h_sim = o_.h_sim;
      cfg.seed = seed;
      Run r;
      r.trace = proofblocks::simulate(g, cfg, tol_);
      r.report = check_assertions(r.trace, g);
      return r;
    };
    std::vector<Run> runs;
    if (seeds.size() == 1) {
      runs.push_back(job(seeds[0]));
    } else {
      std::vector<std::future<Run>> futures;
      for (auto s : seeds) futures.push_back(std::async(std::launch::async, job, s));
      for (auto& f : futures) runs.push_back(f.get());
    }

    bool pass = true;
    for (std::size_t i = 0; i < runs.size(); ++i) {
      for (const auto& a : runs[i].report.assertions) {
        if (a.pass) continue;
        pass = false;
        err_ << command_ << ": assertion " << a.id << " (" << a.label << ") violated at step "
             << (a.first_violation ? std::to_string(*a.first_violation) : std::string("?"))
             << ", seed " << seeds[i] << "\n";
      }
    }
    std::size_t count = runs.empty() ? 0 : runs[0].report.assertions.size();
    out_ << "simulated " << runs.size() << " run(s), " << count << " assertion(s): "
         << (pass ? "all pass" : "VIOLATED") << "\n";

    json j;
    if (runs.size() == 1) {
      j = json::parse(report_to_json(runs[0].report));
      j["seed"] = seeds[0];
      write(stem_ + ".trace.csv", trace_to_csv(runs[0].trace));
    } else {
      j["runs"] = json::array();
      for (std::size_t i = 0; i < runs.size(); ++i) {
        json r = json::parse(report_to_json(runs[i].report));
        r["seed"] = seeds[i];
        j["runs"].push_back(r);
      }
    }
    j["pass"] = pass;
    write_json(stem_ + ".check.json", j);
    if (!pass) status_ = std::max(status_, kRefuted);
  }

  void pipeline() {
    check();
    extract(true);
    certify();
    annotate();
    render();
    discretize();
    codegen();
    simulate();
  }

  std::string command_;
  std::set<std::string> flags_;
  Options o_;
  std::ostream& out_;
  std::ostream& err_;
  Tolerances tol_;
  ModelDocument doc_;
  std::string stem_;
  std::optional<std::vector<std::optional<Certificate>>> certs_;
  bool refuted_ = false;
  std::optional<ModelGraph> annotated_;
  std::optional<std::pair<ModelGraph, DiscretizationReport>> discretized_;
  int status_ = kOk;
};

struct Command {
  const char* name;
  const char* help;
  std::set<std::string> flags;
};

const std::vector<Command>& commands() {
  static const std::set<std::string> cert{"gamma_margin", "q", "import"};
  static const std::set<std::string> disc{"gamma_margin", "q", "import", "h"};
  static const std::set<std::string> all{"gamma_margin", "q", "import", "h", "target",
                                         "horizon", "h_sim", "seed"};
  static const std::vector<Command> list = {
      {"check", "parse, validate and infer dimensions", {}},
      {"extract", "print the state-space model and write <name>.request.json", {}},
      {"certify", "compute or re-verify certificates, write <name>.cert.<i>.json", cert},
      {"annotate", "expand annotation specs, write <name>.annotated.pbm.json", cert},
      {"render", "write the annotated model as <name>.dot", cert},
      {"discretize", "write <name>.discrete.pbm.json and <name>.discretization.json", disc},
      {"codegen", "write <name>.step.c.txt and/or <name>.lus.txt",
       {"gamma_margin", "q", "import", "h", "target"}},
      {"simulate", "simulate and check assertions, write <name>.trace.csv and <name>.check.json",
       {"gamma_margin", "q", "import", "h", "horizon", "h_sim", "seed"}},
      {"pipeline", "run every stage in order", all},
  };
  return list;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"proofblocks: certificates and annotated code for block-diagram models",
               args.empty() ? "proofblocks" : fs::path(args[0]).filename().string()};
  app.require_subcommand(1);
  app.set_help_flag("--help", "print help and exit");
  app.set_help_all_flag("--help-all", "help for every subcommand");

  Options o;
  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const Command& c : commands()) {
    CLI::App* s = app.add_subcommand(c.name, c.help);
    s->add_option("model", o.model, "model file (.pbm.json)")->required()->check(CLI::ExistingFile);
    s->add_option("-o,--out", o.out, "output directory")->capture_default_str();
    if (c.flags.count("h"))
      s->add_option("--h", o.h, "discretization step (required for continuous models)")
          ->check(CLI::PositiveNumber);
    if (c.flags.count("gamma_margin"))
      s->add_option("--gamma-margin", o.gamma_margin, "alpha = margin * H-inf when a spec has none")
          ->check(CLI::Range(1.0, 1e6))
          ->capture_default_str();
    if (c.flags.count("q"))
      s->add_option("--q", o.q, "Lyapunov right-hand side Q = q I")
          ->check(CLI::PositiveNumber)
          ->capture_default_str();
    if (c.flags.count("import"))
      s->add_option("--import", o.imports, "certificate file to re-verify (repeatable)")
          ->check(CLI::ExistingFile);
    if (c.flags.count("target"))
      s->add_option("--target", o.target, "c_like or dataflow (default: both)")
          ->check(CLI::IsMember({"c_like", "dataflow"}));
    if (c.flags.count("horizon"))
      s->add_option("--horizon", o.horizon, "simulated time")->check(CLI::PositiveNumber)->capture_default_str();
    if (c.flags.count("h_sim"))
      s->add_option("--h-sim", o.h_sim, "integration step for continuous models")
          ->check(CLI::PositiveNumber)
          ->capture_default_str();
    if (c.flags.count("seed")) {
      auto* seed = s->add_option("--seed", o.seed, "noise seed")->capture_default_str();
      s->add_option("--seeds", o.seeds, "seed range a..b, one run per seed")
          ->check(CLI::Validator(
              [](std::string& v) {
                static const std::regex re(R"((\d+)\.\.(\d+))");
                std::smatch m;
                if (!std::regex_match(v, m, re) || std::stoull(m[1]) > std::stoull(m[2]))
                  return std::string("expected a..b with a <= b");
                return std::string();
              },
              "a..b"))
          ->excludes(seed);
    }
    subs.emplace_back(s, &c);
  }

  std::vector<std::string> rest(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
  std::reverse(rest.begin(), rest.end());
  try {
    app.parse(rest);
  } catch (const CLI::CallForHelp&) {
    const CLI::App* shown = &app;
    for (const auto& [s, c] : subs)
      if (s->parsed()) shown = s;
    out << shown->help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    const CLI::App* shown = &app;
    for (const auto& [s, c] : subs)
      if (s->parsed()) shown = s;
    err << "error: " << e.what() << "\n\n" << shown->help();
    return kUsage;
  }

  for (const auto& [s, c] : subs)
    if (s->parsed()) return Session(c->name, c->flags, o, out, err).run();
  err << app.help();
  return kUsage;
}

int run(int argc, char** argv) {
  return run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}

}  // namespace proofblocks::cli
