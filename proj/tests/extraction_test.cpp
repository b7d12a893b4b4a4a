#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>

#include "json.hpp"
#include "proofblocks/errors.hpp"
#include "proofblocks/extraction.hpp"
#include "proofblocks/frontend.hpp"
#include "proofblocks/graph.hpp"
#include "proofblocks/backend.hpp"
#include "proofblocks/simcheck.hpp"
#include "test_support.hpp"

namespace proofblocks {
namespace {

using testing::corpus_path;
using testing::MatrixNear;
using testing::read_file;

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::Cancelled;
}

Wire wire(const std::string& s, const std::string& d, std::size_t dp = 0) {
  return Wire{PortRef{s, 0}, PortRef{d, dp}};
}

ModelGraph corpus(const char* name) { return parse_model(read_file(corpus_path(name))).graph; }

TEST(Extract, OpenDoubleIntegrator) {
  ModelGraph g;
  g.blocks = {{"u", blocks::Inport{1}},      {"int_vel", blocks::Integrator{{0.0}}},
              {"int_pos", blocks::Integrator{{0.0}}}, {"pos", blocks::Outport{}},
              {"vel", blocks::Outport{}}};
  g.wires = {wire("u", "int_vel"), wire("int_vel", "int_pos"), wire("int_pos", "pos"),
             wire("int_vel", "vel")};
  const auto ss = extract_state_space(g);
  EXPECT_EQ(ss.a, (Matrix{{0, 1}, {0, 0}}));
  EXPECT_EQ(ss.b, (Matrix{{0}, {1}}));
  EXPECT_EQ(ss.c, Matrix::identity(2));
  EXPECT_EQ(ss.d, Matrix(2, 1));
  EXPECT_EQ(ss.state_names, (std::vector<std::string>{"int_pos[0]", "int_vel[0]"}));
}

TEST(Extract, ClosedDoubleIntegratorMatchesSubstitution) {
  const auto ss = extract_state_space(corpus("double_integrator.pbm.json"));
  // Signal equations of the diagram, substituted by hand:
  //   u = fb + w = -pos - vel + w;  d/dt vel = u;  d/dt pos = vel.
  for (double pos : {-1.0, 0.3, 2.0}) {
    for (double vel : {-0.5, 0.0, 1.5}) {
      for (double w : {-1.0, 0.25}) {
        const double dpos = vel, dvel = -pos - vel + w;
        EXPECT_DOUBLE_EQ(ss.a(0, 0) * pos + ss.a(0, 1) * vel + ss.b(0, 0) * w, dpos);
        EXPECT_DOUBLE_EQ(ss.a(1, 0) * pos + ss.a(1, 1) * vel + ss.b(1, 0) * w, dvel);
      }
    }
  }
  EXPECT_EQ(ss.a, (Matrix{{0, 1}, {-1, -1}}));
  ASSERT_EQ(ss.inputs.size(), 1u);
  EXPECT_EQ(ss.inputs[0].id, "w");
}

TEST(Extract, RequestedOutputs) {
  const auto ss =
      extract_state_space(corpus("double_integrator_l2.pbm.json"), {PortRef{"fb", 0}});
  EXPECT_EQ(ss.c, (Matrix{{-1, -1}}));
  EXPECT_EQ(code_of([] {
              extract_state_space(corpus("double_integrator_l2.pbm.json"), {PortRef{"nope", 0}});
            }),
            ErrorCode::UnresolvedWire);
}

TEST(Extract, ConstantIsAnInput) {
  const auto ss = extract_state_space(corpus("l1_adaptive.pbm.json"));
  // States int_theta_hat, int_x, int_xhat; inputs theta.
  const Matrix a{{0, 10, -10}, {-1, -2, 0}, {0, 0, -2}};
  EXPECT_EQ(ss.a, a);
  EXPECT_EQ(ss.b, (Matrix{{0}, {1}, {0}}));
  EXPECT_EQ(ss.inputs[0].id, "theta");
}

TEST(Extract, NonlinearBlocks) {
  EXPECT_EQ(code_of([] { extract_state_space(corpus("adaptive.pbm.json")); }),
            ErrorCode::NonlinearBlock);
  ModelGraph g;
  g.blocks = {{"u", blocks::Inport{1}}, {"f", blocks::PolyFun{{0, 1}}}, {"o", blocks::Outport{}}};
  g.wires = {wire("u", "f"), wire("f", "o")};
  EXPECT_EQ(code_of([&] { extract_state_space(g); }), ErrorCode::NonlinearBlock);
}

TEST(Extract, ConstantProductFolds) {
  ModelGraph g;
  g.blocks = {{"u", blocks::Inport{2}},
              {"k", blocks::Constant{{3.0, -1.0}}},
              {"p", blocks::Product{ProductMode::Dot}},
              {"o", blocks::Outport{}}};
  g.wires = {wire("k", "p"), wire("u", "p", 1), wire("p", "o")};
  const auto ss = extract_state_space(g);
  // Inputs ordered k, u.
  EXPECT_EQ(ss.d, (Matrix{{0, 0, 3, -1}}));
}

TEST(Extract, MixedTime) {
  ModelGraph g;
  g.blocks = {{"g", blocks::Gain{Matrix{{0.5}}}}, {"x", blocks::Integrator{{1.0}}}};
  g.wires = {wire("g", "x"), wire("x", "g")};
  g.sample_time = 0.1;
  EXPECT_EQ(code_of([&] { extract_state_space(g); }), ErrorCode::MixedTime);
}

TEST(Extract, DiscreteDelayAndStateSpaceBlock) {
  ModelGraph g;
  g.sample_time = 0.5;
  g.blocks = {{"u", blocks::Inport{1}},
              {"d", blocks::UnitDelay{{0.0}}},
              {"s", blocks::StateSpace{Matrix{{0.5, 0}, {1, 0.25}}, Matrix{{1}, {0}},
                                       Matrix{{0, 2}}, Matrix{{0}}}},
              {"sum", blocks::Sum{"+-"}},
              {"o", blocks::Outport{}}};
  g.wires = {wire("u", "sum"), wire("s", "sum", 1), wire("sum", "d"), wire("d", "s"),
             wire("s", "o")};
  const auto ss = extract_state_space(g);
  // x = [d, s0, s1]; d+ = u - 2 s1; s+ = As s + Bs d.
  EXPECT_EQ(ss.a, (Matrix{{0, 0, -2}, {1, 0.5, 0}, {0, 1, 0.25}}));
  EXPECT_EQ(ss.b, (Matrix{{1}, {0}, {0}}));
  EXPECT_EQ(ss.c, (Matrix{{0, 0, 2}}));
}

TEST(Exchange, RequestContainsA) {
  AnalysisRequest req;
  req.ss = extract_state_space(corpus("double_integrator.pbm.json"));
  req.noise = NoiseSpec{NoiseKind::Zero, 0.0};
  req.noise_binding = "w";
  req.requested = {"lyapunov"};
  const std::string text = export_analysis_request(req);
  const auto j = nlohmann::json::parse(text);
  EXPECT_EQ(j["A"], nlohmann::json::parse("[[0,1],[-1,-1]]"));
  EXPECT_EQ(j["noise"]["kind"], "zero");
  EXPECT_EQ(j["schema"], "analysis-request-v1");
  const auto back = import_analysis_request(text);
  EXPECT_EQ(back.ss.a, req.ss.a);
  EXPECT_EQ(back.ss.c, req.ss.c);
  EXPECT_EQ(back.noise_binding, "w");
}

TEST(Exchange, CertificateRoundTripIsBitExact) {
  Certificate c;
  c.kind = CertificateKind::L2Gain;
  c.p = Matrix{{0.1, 1.0 / 3.0}, {1.0 / 3.0, 2.0 / 7.0}};
  c.alpha = 1.0 + 1e-15;
  c.status = CertificateStatus::Verified;
  const auto back = import_certificate(export_certificate(c));
  EXPECT_EQ(std::memcmp(back.p.data().data(), c.p.data().data(), 4 * sizeof(double)), 0);
  EXPECT_EQ(*back.alpha, *c.alpha);
  EXPECT_EQ(back.status, CertificateStatus::Unverified);
  EXPECT_EQ(back.provenance, Provenance::External);
}

TEST(Exchange, ImportCertificate) {
  const auto c = import_certificate(R"({"kind": "lyapunov", "P": [[1, 0], [0, 1]]})");
  EXPECT_EQ(c.kind, CertificateKind::LyapunovContinuous);
  EXPECT_EQ(c.p, Matrix::identity(2));
  EXPECT_EQ(c.status, CertificateStatus::Unverified);
  EXPECT_EQ(code_of([] { import_certificate(R"({"kind": "lyapunov", "P": [[1, 0]]})"); }),
            ErrorCode::SchemaError);
  EXPECT_EQ(code_of([] { import_certificate(R"({"P": [[1]]})"); }), ErrorCode::SchemaError);
  EXPECT_EQ(code_of([] { import_certificate("{"); }), ErrorCode::SyntaxError);
}

const char* kLinearCorpus[] = {"double_integrator.pbm.json", "double_integrator_l2.pbm.json",
                               "l1_adaptive.pbm.json"};

std::vector<double> input_at(const Trace& t, const StateSpaceModel& ss, std::size_t k) {
  std::vector<double> u;
  for (const auto& in : ss.inputs)
    for (std::size_t i = 0; i < in.dim; ++i) u.push_back(t.column(trace_column(in.id, i, in.dim))[k]);
  return u;
}

std::vector<double> state_at(const Trace& t, const StateSpaceModel& ss, std::size_t k) {
  std::vector<double> x;
  for (const auto& s : ss.states)
    for (std::size_t i = 0; i < s.dim; ++i) x.push_back(t.column(trace_column(s.id, i, s.dim))[k]);
  return x;
}

std::vector<double> affine(const Matrix& a, const std::vector<double>& x, const Matrix& b,
                           const std::vector<double>& u) {
  std::vector<double> y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < x.size(); ++j) y[i] += a(i, j) * x[j];
    for (std::size_t j = 0; j < u.size(); ++j) y[i] += b(i, j) * u[j];
  }
  return y;
}

void expect_close(const std::vector<double>& a, const std::vector<double>& b, const std::string& what) {
  ASSERT_EQ(a.size(), b.size()) << what;
  for (std::size_t i = 0; i < a.size(); ++i)
    ASSERT_LE(std::abs(a[i] - b[i]), 1e-12 * std::max(1.0, std::abs(b[i]))) << what << " [" << i << "]";
}

// Outports have no trace column; read the signal that feeds them.
void expect_outputs(const ModelGraph& g, const Trace& t, const StateSpaceModel& ss,
                    const std::vector<double>& x, const std::vector<double>& u, std::size_t k,
                    const std::string& what) {
  const auto y = affine(ss.c, x, ss.d, u);
  std::vector<double> got;
  for (const auto& o : ss.outputs) {
    const auto w = std::find_if(g.wires.begin(), g.wires.end(),
                                [&](const Wire& w) { return w.dst.block == o.id; });
    ASSERT_NE(w, g.wires.end()) << o.id;
    for (std::size_t i = 0; i < o.dim; ++i) got.push_back(t.column(trace_column(w->src.block, i, o.dim))[k]);
  }
  expect_close(got, y, what + " outputs");
}

TEST(ExtractProperty, ContinuousModelReproducesDiagramUnderSameRk4) {
  for (const char* name : kLinearCorpus) {
    const ModelGraph g = corpus(name);
    const auto ss = extract_state_space(g);
    SimConfig cfg;
    cfg.horizon = 2.0;
    cfg.h_sim = 0.01;
    cfg.seed = 5;
    const auto t = simulate(g, cfg);
    std::vector<double> x = state_at(t, ss, 0);
    const double h = cfg.h_sim;
    for (std::size_t k = 0; k + 1 < t.steps(); ++k) {
      const auto u = input_at(t, ss, k);
      expect_outputs(g, t, ss, x, u, k, name);
      auto f = [&](const std::vector<double>& s) { return affine(ss.a, s, ss.b, u); };
      auto add = [](std::vector<double> a, const std::vector<double>& b, double c) {
        for (std::size_t i = 0; i < a.size(); ++i) a[i] += c * b[i];
        return a;
      };
      const auto k1 = f(x), k2 = f(add(x, k1, h / 2)), k3 = f(add(x, k2, h / 2)), k4 = f(add(x, k3, h));
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
      expect_close(state_at(t, ss, k + 1), x, std::string(name) + " step " + std::to_string(k + 1));
    }
  }
}

TEST(ExtractProperty, DiscreteModelReproducesDiagram) {
  for (const char* name : kLinearCorpus) {
    const auto doc = parse_model(read_file(corpus_path(name)));
    AnnotationSpec manual;
    manual.kind = AnnotationKind::Manual;
    const auto gd = discretize_with_proof(doc.graph, {manual}, {std::nullopt}, 0.05).first;
    const ModelGraph exec = subgraph(gd, Region::Executable);
    const auto ss = extract_state_space(exec);
    ASSERT_TRUE(ss.is_discrete());
    SimConfig cfg;
    cfg.horizon = 5.0;
    cfg.seed = 9;
    const auto t = simulate(exec, cfg);
    std::vector<double> x = state_at(t, ss, 0);
    for (std::size_t k = 0; k + 1 < t.steps(); ++k) {
      const auto u = input_at(t, ss, k);
      expect_outputs(exec, t, ss, x, u, k, name);
      x = affine(ss.a, x, ss.b, u);
      expect_close(state_at(t, ss, k + 1), x, std::string(name) + " step " + std::to_string(k + 1));
    }
  }
}

TEST(ExtractProperty, DeterministicIdOrder) {
  for (const char* name : kLinearCorpus) {
    ModelGraph g = corpus(name);
    const auto a = extract_state_space(g);
    std::reverse(g.blocks.begin(), g.blocks.end());
    std::reverse(g.wires.begin(), g.wires.end());
    const auto b = extract_state_space(g);
    EXPECT_EQ(a.a, b.a) << name;
    EXPECT_EQ(a.b, b.b) << name;
    EXPECT_EQ(a.state_names, b.state_names) << name;
    EXPECT_TRUE(std::is_sorted(a.states.begin(), a.states.end(),
                               [](const SignalSlot& x, const SignalSlot& y) { return x.id < y.id; }))
        << name;
    EXPECT_TRUE(std::is_sorted(a.inputs.begin(), a.inputs.end(),
                               [](const SignalSlot& x, const SignalSlot& y) { return x.id < y.id; }))
        << name;
  }
}

}  // namespace
}  // namespace proofblocks
