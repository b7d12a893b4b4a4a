#include <gtest/gtest.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <set>
#include <sstream>

#include "json.hpp"
#include "proofblocks/cli.hpp"
#include "proofblocks/extraction.hpp"
#include "test_support.hpp"

namespace proofblocks {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using testing::corpus_path;
using testing::data_path;
using testing::read_file;

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  args.insert(args.begin(), "proofblocks");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("proofblocks_cli_") + info->name());
    fs::remove_all(dir_);
    unsetenv("PROOFBLOCKS_TOLERANCE_SCALE");
  }
  void TearDown() override {
    fs::remove_all(dir_);
    unsetenv("PROOFBLOCKS_TOLERANCE_SCALE");
  }

  std::string out(const std::string& sub = "") const { return (dir_ / sub).string(); }

  std::set<std::string> listing(const std::string& sub = "") const {
    std::set<std::string> names;
    for (const auto& e : fs::directory_iterator(dir_ / sub)) names.insert(e.path().filename());
    return names;
  }

  json load(const std::string& name) const { return json::parse(read_file((dir_ / name).string())); }

  fs::path dir_;
};

TEST_F(Cli, PipelineWritesExactlyTheDocumentedFiles) {
  const auto r = cli({"pipeline", corpus_path("double_integrator.pbm.json"), "--h", "0.01", "-o", out()});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::set<std::string> expected = {
      "double_integrator.request.json",        "double_integrator.cert.0.json",
      "double_integrator.annotated.pbm.json",  "double_integrator.dot",
      "double_integrator.discrete.pbm.json",   "double_integrator.discretization.json",
      "double_integrator.step.c.txt",          "double_integrator.lus.txt",
      "double_integrator.trace.csv",           "double_integrator.check.json"};
  EXPECT_EQ(listing(), expected);
  EXPECT_EQ(load("double_integrator.discretization.json")["certificate_path"], "recomputed_discrete");
  EXPECT_TRUE(load("double_integrator.check.json")["pass"].get<bool>());
}

TEST_F(Cli, RerunIsByteIdentical) {
  const std::vector<std::string> args = {"pipeline", corpus_path("double_integrator_l2.pbm.json"),
                                         "--h", "0.01", "--seed", "7"};
  auto first = args, second = args;
  first.insert(first.end(), {"-o", out("a")});
  second.insert(second.end(), {"-o", out("a2")});
  ASSERT_EQ(cli(first).code, 0);
  ASSERT_EQ(cli(second).code, 0);
  const auto names = listing("a");
  ASSERT_EQ(names, listing("a2"));
  for (const auto& n : names) {
    const std::string before = read_file(out("a/" + n));
    EXPECT_EQ(before, read_file(out("a2/" + n))) << n;
  }
  // Same directory: overwritten in place with identical bytes.
  const std::string check = read_file(out("a/double_integrator_l2.check.json"));
  ASSERT_EQ(cli(first).code, 0);
  EXPECT_EQ(read_file(out("a/double_integrator_l2.check.json")), check);
  EXPECT_EQ(listing("a"), names);
}

TEST_F(Cli, AllCorpusModelsCompletePipeline) {
  for (const char* m : {"double_integrator", "double_integrator_l2", "l1_adaptive", "adaptive"}) {
    const auto r = cli({"pipeline", corpus_path(std::string(m) + ".pbm.json"), "--h", "0.01", "-o", out(m)});
    EXPECT_EQ(r.code, 0) << m << "\n" << r.err;
    EXPECT_TRUE(fs::exists(dir_ / m / (std::string(m) + ".lus.txt"))) << m;
  }
  // The nonlinear model has no state-space form, so it has no request file.
  EXPECT_FALSE(fs::exists(dir_ / "adaptive" / "adaptive.request.json"));
}

TEST_F(Cli, OpenLoopCertifyIsRefuted) {
  const auto r = cli({"certify", data_path("open_loop_double_integrator.pbm.json"), "-o", out()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("SingularOperator"), std::string::npos) << r.err;
}

TEST_F(Cli, FalsifiedL1BoundFailsSimulation) {
  const auto r = cli({"simulate", data_path("l1_falsified.pbm.json"), "-o", out()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("anno.l1_bound.0.assert"), std::string::npos) << r.err;
  const json report = load("l1_falsified.check.json");
  EXPECT_FALSE(report["pass"].get<bool>());
  EXPECT_EQ(report["assertions"][0]["id"], "anno.l1_bound.0.assert");
  EXPECT_FALSE(report["assertions"][0]["pass"].get<bool>());

  // The unmodified model passes.
  EXPECT_EQ(cli({"simulate", corpus_path("l1_adaptive.pbm.json"), "-o", out()}).code, 0);
}

TEST_F(Cli, UsageErrorsExit64) {
  EXPECT_EQ(cli({}).code, 64);
  EXPECT_EQ(cli({"frobnicate"}).code, 64);
  EXPECT_EQ(cli({"check"}).code, 64);
  EXPECT_EQ(cli({"check", data_path("does_not_exist.pbm.json")}).code, 64);
  const auto bad_h = cli({"discretize", corpus_path("double_integrator.pbm.json"), "--h", "-1", "-o", out()});
  EXPECT_EQ(bad_h.code, 64);
  EXPECT_NE(bad_h.err.find("Usage"), std::string::npos);
  EXPECT_EQ(cli({"codegen", corpus_path("double_integrator.pbm.json"), "--h", "0.1", "--target", "fortran"}).code, 64);
  EXPECT_EQ(cli({"simulate", corpus_path("double_integrator.pbm.json"), "--seeds", "5..2"}).code, 64);
  EXPECT_EQ(cli({"discretize", corpus_path("double_integrator.pbm.json"), "-o", out()}).code, 64);
  EXPECT_FALSE(fs::exists(dir_ / "double_integrator.discrete.pbm.json"));
  const auto help = cli({"--help"});
  EXPECT_EQ(help.code, 0);
  EXPECT_NE(help.out.find("pipeline"), std::string::npos);
}

TEST_F(Cli, MalformedModelExits1) {
  fs::create_directories(dir_);
  const std::string bad = out("bad.pbm.json");
  std::ofstream(bad) << "{\"version\": \"1\", \"blocks\": [";
  const auto r = cli({"check", bad});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("SyntaxError"), std::string::npos) << r.err;
}

TEST_F(Cli, CheckWritesNothing) {
  const auto r = cli({"check", corpus_path("adaptive.pbm.json"), "-o", out()});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(listing().empty());
}

TEST_F(Cli, ProvenanceEchoesNumericFlags) {
  ASSERT_EQ(cli({"certify", corpus_path("double_integrator.pbm.json"), "--gamma-margin", "1.5",
                 "--q", "2", "-o", out()})
                .code,
            0);
  const json cert = load("double_integrator.cert.0.json");
  EXPECT_DOUBLE_EQ(cert["provenance"]["gamma_margin"].get<double>(), 1.5);
  EXPECT_DOUBLE_EQ(cert["provenance"]["q"].get<double>(), 2.0);
  EXPECT_EQ(cert["provenance"]["command"], "certify");

  ASSERT_EQ(cli({"simulate", corpus_path("double_integrator.pbm.json"), "--horizon", "2",
                 "--seed", "11", "--h-sim", "0.01", "-o", out()})
                .code,
            0);
  const json check = load("double_integrator.check.json");
  EXPECT_DOUBLE_EQ(check["provenance"]["horizon"].get<double>(), 2.0);
  EXPECT_DOUBLE_EQ(check["provenance"]["h_sim"].get<double>(), 0.01);
  EXPECT_EQ(check["provenance"]["seed"].get<int>(), 11);
  // 2 s at 0.01: 201 rows plus the header.
  const std::string csv = read_file(out("double_integrator.trace.csv"));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 202);

  ASSERT_EQ(cli({"discretize", corpus_path("double_integrator.pbm.json"), "--h", "0.05", "-o", out()}).code, 0);
  EXPECT_DOUBLE_EQ(load("double_integrator.discretization.json")["provenance"]["h"].get<double>(), 0.05);
  EXPECT_DOUBLE_EQ(load("double_integrator.discrete.pbm.json")["provenance"]["h"].get<double>(), 0.05);
}

TEST_F(Cli, QDoesNotOverrideAGivenP) {
  ASSERT_EQ(cli({"certify", corpus_path("double_integrator.pbm.json"), "-o", out("one")}).code, 0);
  ASSERT_EQ(cli({"certify", corpus_path("double_integrator.pbm.json"), "--q", "3", "-o", out("three")}).code, 0);
  const auto p1 = load("one/double_integrator.cert.0.json")["P"];
  const auto p3 = load("three/double_integrator.cert.0.json")["P"];
  // The corpus spec carries P, so it is verified as given and Q has no effect.
  EXPECT_EQ(p1, p3);
}

TEST_F(Cli, ImportedCertificatesAreReverified) {
  ASSERT_EQ(cli({"certify", corpus_path("double_integrator_l2.pbm.json"), "-o", out()}).code, 0);
  const std::string good = out("double_integrator_l2.cert.0.json");
  const auto ok = cli({"certify", corpus_path("double_integrator_l2.pbm.json"), "--import", good, "-o", out("re")});
  EXPECT_EQ(ok.code, 0) << ok.err;
  EXPECT_EQ(load("re/double_integrator_l2.cert.0.json")["origin"], "external");
  EXPECT_EQ(load("re/double_integrator_l2.cert.0.json")["status"], "verified");

  json forged = json::parse(read_file(good));
  forged["P"] = {{-1.0, 0.0}, {0.0, -1.0}};
  const std::string bad = out("forged.json");
  std::ofstream(bad) << forged.dump();
  const auto r = cli({"certify", corpus_path("double_integrator_l2.pbm.json"), "--import", bad, "-o", out("bad")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("refuted"), std::string::npos) << r.err;
  EXPECT_EQ(load("bad/double_integrator_l2.cert.0.json")["status"], "refuted");

  // A refuted certificate stops annotation.
  EXPECT_EQ(cli({"annotate", corpus_path("double_integrator_l2.pbm.json"), "--import", bad, "-o", out("bad2")}).code, 2);
  EXPECT_FALSE(fs::exists(dir_ / "bad2" / "double_integrator_l2.annotated.pbm.json"));

  // Certificates of the wrong kind have no spec to attach to.
  EXPECT_EQ(cli({"certify", corpus_path("double_integrator.pbm.json"), "--import", good, "-o", out("kind")}).code, 1);
}

TEST_F(Cli, SeedRangeFansOut) {
  const auto r = cli({"simulate", corpus_path("double_integrator_l2.pbm.json"), "--seeds", "0..3",
                      "--horizon", "1", "-o", out()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json report = load("double_integrator_l2.check.json");
  ASSERT_EQ(report["runs"].size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(report["runs"][i]["seed"].get<std::size_t>(), i);
  EXPECT_EQ(report["provenance"]["seeds"], json::array({0, 3}));
  EXPECT_FALSE(fs::exists(dir_ / "double_integrator_l2.trace.csv"));
}

TEST_F(Cli, ToleranceScaleEnvironment) {
  setenv("PROOFBLOCKS_TOLERANCE_SCALE", "abc", 1);
  EXPECT_EQ(cli({"certify", corpus_path("double_integrator.pbm.json"), "-o", out()}).code, 64);
  setenv("PROOFBLOCKS_TOLERANCE_SCALE", "2", 1);
  ASSERT_EQ(cli({"certify", corpus_path("double_integrator.pbm.json"), "-o", out()}).code, 0);
  EXPECT_DOUBLE_EQ(load("double_integrator.cert.0.json")["provenance"]["tolerance_scale"].get<double>(), 2.0);
}

TEST_F(Cli, CodegenSingleTarget) {
  ASSERT_EQ(cli({"codegen", corpus_path("double_integrator.pbm.json"), "--h", "0.1", "--target",
                 "dataflow", "-o", out()})
                .code,
            0);
  EXPECT_EQ(listing(), std::set<std::string>{"double_integrator.lus.txt"});
}

TEST_F(Cli, ExtractWritesAnImportableRequest) {
  const auto r = cli({"extract", corpus_path("double_integrator_l2.pbm.json"), "-o", out()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("A = [[0, 1], [-1, -1]]"), std::string::npos) << r.out;
  const AnalysisRequest req = import_analysis_request(read_file(out("double_integrator_l2.request.json")));
  EXPECT_EQ(req.ss.n(), 2u);
  EXPECT_EQ(req.requested, std::vector<std::string>{"l2gain"});
  ASSERT_TRUE(req.noise.has_value());

  EXPECT_EQ(cli({"extract", corpus_path("adaptive.pbm.json"), "-o", out()}).code, 1);
}

TEST_F(Cli, AnnotatedModelParsesAndRenders) {
  ASSERT_EQ(cli({"annotate", corpus_path("double_integrator.pbm.json"), "-o", out()}).code, 0);
  ASSERT_EQ(cli({"render", corpus_path("double_integrator.pbm.json"), "-o", out()}).code, 0);
  const std::string dot = read_file(out("double_integrator.dot"));
  EXPECT_EQ(dot.rfind("digraph", 0), 0u);
  EXPECT_NE(dot.find("anno.stability.0.v"), std::string::npos);
  // The annotated model is a valid model file; checking it succeeds.
  EXPECT_EQ(cli({"check", out("double_integrator.annotated.pbm.json")}).code, 0);
}

}  // namespace
}  // namespace proofblocks
