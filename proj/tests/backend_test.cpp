#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "proofblocks/annotator.hpp"
#include "proofblocks/backend.hpp"
#include "proofblocks/extraction.hpp"
#include "proofblocks/frontend.hpp"
#include "proofblocks/graph.hpp"
#include "proofblocks/linalg.hpp"
#include "proofblocks/pipeline.hpp"
#include "proofblocks/simcheck.hpp"
#include "test_support.hpp"

namespace proofblocks {
namespace {

using testing::corpus_path;
using testing::MatrixNear;
using testing::read_file;

const char* kCorpus[] = {"double_integrator.pbm.json", "double_integrator_l2.pbm.json",
                         "l1_adaptive.pbm.json", "adaptive.pbm.json"};
const char* kLinear[] = {"double_integrator.pbm.json", "double_integrator_l2.pbm.json",
                         "l1_adaptive.pbm.json"};

ModelDocument corpus(const std::string& name) { return parse_model(read_file(corpus_path(name))); }

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::Cancelled;
}

struct Discretized {
  ModelGraph annotated, gd;
  DiscretizationReport report;
};

Discretized run(const std::string& name, double h) {
  const auto doc = corpus(name);
  const auto certs = certify_annotations(doc.graph, doc.annotations);
  Discretized d;
  d.annotated = annotate(doc.graph, doc.annotations, certs).graph;
  std::tie(d.gd, d.report) = discretize_with_proof(d.annotated, doc.annotations, certs, h);
  return d;
}

StateSpaceModel ss_of(Matrix a, Matrix b) {
  StateSpaceModel ss;
  ss.a = std::move(a);
  ss.b = std::move(b);
  ss.c = Matrix::identity(ss.a.rows());
  ss.d = Matrix(ss.a.rows(), ss.b.cols());
  return ss;
}

TEST(Zoh, DoubleIntegratorExact) {
  const auto d = zoh_discretize(ss_of(Matrix{{0, 1}, {0, 0}}, Matrix{{0}, {1}}), 0.1);
  EXPECT_TRUE(MatrixNear(d.a, Matrix{{1, 0.1}, {0, 1}}, 1e-14));
  EXPECT_TRUE(MatrixNear(d.b, Matrix{{0.005}, {0.1}}, 1e-14));
  EXPECT_EQ(d.sample_time, 0.1);
  EXPECT_EQ(d.c, Matrix::identity(2));
}

TEST(Zoh, ZeroDynamicsAndScalarLag) {
  const auto z = zoh_discretize(ss_of(Matrix(2, 2), Matrix{{1}, {2}}), 0.3);
  EXPECT_TRUE(MatrixNear(z.a, Matrix::identity(2), 1e-15));
  EXPECT_TRUE(MatrixNear(z.b, Matrix{{0.3}, {0.6}}, 1e-15));
  const auto l = zoh_discretize(ss_of(Matrix{{-1}}, Matrix{{1}}), std::log(2.0));
  EXPECT_NEAR(l.a(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(l.b(0, 0), 0.5, 1e-15);
}

TEST(Zoh, Preconditions) {
  auto ss = ss_of(Matrix{{-1}}, Matrix{{1}});
  EXPECT_EQ(code_of([&] { zoh_discretize(ss, 0.0); }), ErrorCode::PreconditionViolation);
  ss.sample_time = 0.1;
  EXPECT_EQ(code_of([&] { zoh_discretize(ss, 0.1); }), ErrorCode::PreconditionViolation);
}

// Fine-step RK4 of x' = Ax + Bu with u held over each step.
std::vector<double> rk4_hold(const Matrix& a, const Matrix& b, std::vector<double> x,
                             const std::vector<double>& u, double h, int sub) {
  const std::size_t n = x.size();
  auto f = [&](const std::vector<double>& s) {
    std::vector<double> r(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) r[i] += a(i, j) * s[j];
      for (std::size_t j = 0; j < u.size(); ++j) r[i] += b(i, j) * u[j];
    }
    return r;
  };
  const double dt = h / sub;
  for (int k = 0; k < sub; ++k) {
    auto k1 = f(x), t = x;
    for (std::size_t i = 0; i < n; ++i) t[i] = x[i] + dt / 2 * k1[i];
    auto k2 = f(t);
    for (std::size_t i = 0; i < n; ++i) t[i] = x[i] + dt / 2 * k2[i];
    auto k3 = f(t);
    for (std::size_t i = 0; i < n; ++i) t[i] = x[i] + dt * k3[i];
    auto k4 = f(t);
    for (std::size_t i = 0; i < n; ++i) x[i] += dt / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
  }
  return x;
}

TEST(Zoh, MatchesRk4ReferenceOnLinearCorpus) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (const char* name : kLinear) {
    const auto ss = extract_state_space(subgraph(corpus(name).graph, Region::Executable));
    const double h = 0.05;
    const auto d = zoh_discretize(ss, h);
    std::vector<double> xz(ss.n(), 0.5), xr = xz;
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
      std::vector<double> u(ss.m());
      for (double& v : u) v = dist(rng);
      std::vector<double> next(ss.n(), 0.0);
      for (std::size_t i = 0; i < ss.n(); ++i) {
        for (std::size_t j = 0; j < ss.n(); ++j) next[i] += d.a(i, j) * xz[j];
        for (std::size_t j = 0; j < ss.m(); ++j) next[i] += d.b(i, j) * u[j];
      }
      xz = next;
      xr = rk4_hold(ss.a, ss.b, xr, u, h, 50);
      for (std::size_t i = 0; i < ss.n(); ++i) worst = std::max(worst, std::abs(xz[i] - xr[i]));
    }
    EXPECT_LE(worst, 1e-6) << name;
  }
}

TEST(Discretize, DoubleIntegratorRecomputesLyapunovProof) {
  const auto d = run("double_integrator.pbm.json", 0.01);
  EXPECT_TRUE(d.report.exact);
  EXPECT_EQ(d.report.certificate_path, CertificatePath::RecomputedDiscrete);
  ASSERT_TRUE(d.report.discrete_cert);
  EXPECT_TRUE(d.report.discrete_cert->verified());
  EXPECT_EQ(d.report.discrete_cert->kind, CertificateKind::LyapunovDiscrete);
  // Residual of Ad' P Ad - P + I = 0, recomputed here.
  const Matrix& ad = d.report.ad;
  const Matrix& p = d.report.discrete_cert->p;
  const Matrix r = matmul(matmul(ad.transpose(), p), ad) - p + Matrix::identity(2);
  EXPECT_LE(r.max_abs(), 1e-8 * (1.0 + p.max_abs()));
  EXPECT_TRUE(d.gd.is_discrete());
  EXPECT_TRUE(validate(d.gd).empty());
  EXPECT_EQ(d.report.proofs.at(0).level.value_or(-1.0),
            p(0, 0) * (1.0 + 1e-9));  // x0 = (pos, vel) = (1, 0)
  EXPECT_TRUE(d.gd.find("int_pos") &&
              std::holds_alternative<blocks::UnitDelay>(d.gd.find("int_pos")->kind));
}

TEST(Discretize, AdaptiveIsCarried) {
  const auto d = run("adaptive.pbm.json", 0.01);
  EXPECT_FALSE(d.report.exact);
  EXPECT_EQ(d.report.certificate_path, CertificatePath::ContinuousCarriedRuntimeOnly);
  EXPECT_FALSE(d.report.discrete_cert);
  bool nonlinear = false;
  for (const auto& w : d.report.warnings) nonlinear = nonlinear || w.code == "NonlinearBlock";
  EXPECT_TRUE(nonlinear);
  for (const auto& b : d.gd.blocks) EXPECT_FALSE(std::holds_alternative<blocks::Integrator>(b.kind));
}

TEST(Discretize, L1IsCarriedOnExactPlant) {
  const auto d = run("l1_adaptive.pbm.json", 0.01);
  EXPECT_TRUE(d.report.exact);
  EXPECT_EQ(d.report.proofs.at(0).path, CertificatePath::ContinuousCarriedRuntimeOnly);
}

TEST(Discretize, L2KeepsContinuousStorageAtSmallStep) {
  const auto d = run("double_integrator_l2.pbm.json", 0.01);
  ASSERT_EQ(d.report.proofs.size(), 1u);
  EXPECT_EQ(d.report.proofs[0].path, CertificatePath::RecomputedDiscrete);
  EXPECT_NE(d.gd.find("anno.l2gain.0.ledger_prev"), nullptr);
}

TEST(Discretize, RejectsBadStep) {
  const auto doc = corpus("double_integrator.pbm.json");
  const auto certs = certify_annotations(doc.graph, doc.annotations);
  const auto g = annotate(doc.graph, doc.annotations, certs).graph;
  EXPECT_EQ(code_of([&] { discretize_with_proof(g, doc.annotations, certs, 0.0); }),
            ErrorCode::PreconditionViolation);
  EXPECT_EQ(code_of([&] { discretize_with_proof(g, {}, {}, 0.01); }),
            ErrorCode::PreconditionViolation);
}

TEST(Codegen, CLikeCarriesInvariantAndUpdatesStates) {
  const auto d = run("double_integrator.pbm.json", 0.01);
  const std::string c = emit_code(d.gd, d.report, CodeTarget::CLike);
  EXPECT_NE(c.find("x_P_x"), std::string::npos);
  EXPECT_NE(c.find("loop invariant x_P_x"), std::string::npos);
  EXPECT_NE(c.find("decrease:"), std::string::npos);
  EXPECT_NE(c.find("s->int_pos = "), std::string::npos);
  EXPECT_NE(c.find("s->int_vel = "), std::string::npos);
  EXPECT_NE(c.find("double_integrator_step("), std::string::npos);
  EXPECT_EQ(c, emit_code(d.gd, d.report, CodeTarget::CLike));
  const std::string fixed = emit_code(d.gd, d.report, CodeTarget::CLike, 2.5);
  EXPECT_NE(fixed.find("<= 2.5;"), std::string::npos);
}

TEST(Codegen, L2CarriesDissipation) {
  const auto d = run("double_integrator_l2.pbm.json", 0.01);
  EXPECT_NE(emit_code(d.gd, d.report, CodeTarget::CLike).find("dissipation:"), std::string::npos);
  EXPECT_NE(emit_code(d.gd, d.report, CodeTarget::Dataflow).find("--@ ensures dissipation:"),
            std::string::npos);
}

TEST(Codegen, PrintsSeventeenDigits) {
  const auto d = run("double_integrator.pbm.json", 0.01);
  const std::string text = emit_code(d.gd, d.report, CodeTarget::Dataflow);
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", d.report.ad(0, 1));
  EXPECT_NE(text.find(buf), std::string::npos) << buf;
  std::snprintf(buf, sizeof buf, "%.17g", d.report.discrete_cert->p(0, 1));
  EXPECT_NE(text.find(buf), std::string::npos) << buf;
}

void expect_dataflow_matches_simulation(const ModelGraph& gd, const DiscretizationReport& rep,
                                        SimConfig cfg, const std::string& what) {
  const auto trace = simulate(gd, cfg);
  const std::string text = emit_code(gd, rep, CodeTarget::Dataflow);
  const auto names = code_variable_names(gd);
  const auto dims = block_output_dims(gd);
  std::map<std::string, std::vector<double>> inputs;
  for (std::size_t b = 0; b < gd.blocks.size(); ++b) {
    const Block& blk = gd.blocks[b];
    if (blk.region != Region::Executable) continue;
    if (!std::holds_alternative<blocks::NoiseSource>(blk.kind) &&
        !std::holds_alternative<blocks::Inport>(blk.kind))
      continue;
    for (std::size_t i = 0; i < dims[b]; ++i)
      inputs[names.at(blk.id)[i]] = trace.column(trace_column(blk.id, i, dims[b]));
  }
  const auto interp = interpret_dataflow(text, inputs, trace.steps());
  std::size_t compared = 0;
  for (std::size_t b = 0; b < gd.blocks.size(); ++b) {
    const Block& blk = gd.blocks[b];
    if (blk.region != Region::Executable || !names.count(blk.id)) continue;
    for (std::size_t i = 0; i < dims[b]; ++i) {
      const auto want = trace.column(trace_column(blk.id, i, dims[b]));
      const auto got = interp.column(names.at(blk.id)[i]);
      ASSERT_EQ(want.size(), got.size());
      for (std::size_t k = 0; k < want.size(); ++k)
        ASSERT_LE(std::abs(want[k] - got[k]), 1e-12 * std::max(1.0, std::abs(want[k])))
            << what << " " << blk.id << "[" << i << "] step " << k;
      ++compared;
    }
  }
  EXPECT_GT(compared, 0u) << what;
}

TEST(Codegen, DataflowMatchesSimulationOnCorpus) {
  for (const char* name : kCorpus) {
    const auto d = run(name, 0.01);
    SimConfig cfg;
    cfg.horizon = 5.0;
    cfg.seed = 3;
    expect_dataflow_matches_simulation(d.gd, d.report, cfg, name);
  }
}

TEST(Codegen, OpenDoubleIntegratorImpulse) {
  ModelGraph g;
  g.blocks = {{"u", blocks::Inport{1}},
              {"int_vel", blocks::Integrator{{0.0}}},
              {"int_pos", blocks::Integrator{{0.0}}},
              {"pos", blocks::Outport{}},
              {"v_qf", blocks::QuadraticForm{Matrix::identity(2)}, Region::Annotation},
              {"x", blocks::Mux{2}, Region::Annotation},
              {"check", blocks::AssertLE0{}, Region::Annotation}};
  g.wires = {{{"u", 0}, {"int_vel", 0}},  {{"int_vel", 0}, {"int_pos", 0}},
             {{"int_pos", 0}, {"pos", 0}}, {{"int_pos", 0}, {"x", 0}, WireMarker::State},
             {{"int_vel", 0}, {"x", 1}, WireMarker::State}, {{"x", 0}, {"v_qf", 0}},
             {{"v_qf", 0}, {"check", 0}}};
  ASSERT_TRUE(validate(g).empty());
  AnnotationSpec manual;
  manual.kind = AnnotationKind::Manual;
  const auto [gd, rep] = discretize_with_proof(g, {manual}, {std::nullopt}, 0.1);
  SimConfig cfg;
  cfg.horizon = 2.0;
  cfg.inputs["u"] = {{1.0}};
  expect_dataflow_matches_simulation(gd, rep, cfg, "impulse");
  const auto t = simulate(gd, cfg);
  EXPECT_NEAR(t.column("int_vel").back(), 0.1, 1e-15);
  EXPECT_NEAR(t.column("int_pos").back(), 0.005 + 0.1 * 0.1 * 19, 1e-12);
}

bool is_comment(const std::string& line, CodeTarget target) {
  const auto b = line.find_first_not_of(" \t");
  if (b == std::string::npos) return false;
  const std::string t = line.substr(b);
  if (target == CodeTarget::Dataflow) return t.rfind("--", 0) == 0;
  return t.rfind("//", 0) == 0 || t.rfind("/*", 0) == 0 || t.rfind("@", 0) == 0 ||
         t.rfind("*", 0) == 0;
}

std::vector<std::string> code_lines(const std::string& text, CodeTarget target) {
  std::vector<std::string> out;
  std::istringstream is(text);
  for (std::string line; std::getline(is, line);)
    if (!is_comment(line, target)) out.push_back(line);
  return out;
}

TEST(Codegen, StrippingAnnotationsChangesOnlyComments) {
  for (const char* name : kCorpus) {
    const auto d = run(name, 0.01);
    const ModelGraph stripped = subgraph(d.gd, Region::Executable);
    for (CodeTarget t : {CodeTarget::CLike, CodeTarget::Dataflow}) {
      const std::string full = emit_code(d.gd, d.report, t);
      const std::string bare = emit_code(stripped, d.report, t);
      EXPECT_NE(full, bare) << name;
      EXPECT_EQ(code_lines(full, t), code_lines(bare, t)) << name << " " << to_string(t);
    }
  }
}

TEST(Codegen, RejectsContinuousGraphs) {
  const auto doc = corpus("double_integrator.pbm.json");
  EXPECT_EQ(code_of([&] { emit_code(doc.graph, {}, CodeTarget::Dataflow); }),
            ErrorCode::PreconditionViolation);
  EXPECT_EQ(code_target_from_string("dataflow"), CodeTarget::Dataflow);
  EXPECT_EQ(code_of([] { code_target_from_string("rust"); }), ErrorCode::PreconditionViolation);
}

TEST(Codegen, FileNames) {
  const auto doc = corpus("double_integrator.pbm.json");
  EXPECT_EQ(code_file_name(doc.graph, CodeTarget::CLike), "double_integrator.step.c.txt");
  EXPECT_EQ(code_file_name(doc.graph, CodeTarget::Dataflow), "double_integrator.lus.txt");
}

TEST(Codegen, EmissionIsByteStable) {
  for (const char* name : kCorpus) {
    const auto a = run(name, 0.01), b = run(name, 0.01);
    ModelDocument da, db;
    da.graph = a.gd;
    db.graph = b.gd;
    EXPECT_EQ(print_model(da), print_model(db)) << name;
    for (CodeTarget t : {CodeTarget::CLike, CodeTarget::Dataflow})
      EXPECT_EQ(emit_code(a.gd, a.report, t), emit_code(b.gd, b.report, t)) << name;
  }
}

}  // namespace
}  // namespace proofblocks
