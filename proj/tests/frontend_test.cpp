#include <gtest/gtest.h>

#include <cstring>
#include <random>

#include "proofblocks/frontend.hpp"
#include "proofblocks/graph.hpp"
#include "test_support.hpp"

namespace proofblocks {
namespace {

using testing::corpus_path;
using testing::read_file;

const char* kCorpus[] = {"double_integrator.pbm.json", "double_integrator_l2.pbm.json",
                         "adaptive.pbm.json", "l1_adaptive.pbm.json"};

const char* kMinimal = R"({
  "version": "1",
  "blocks": [
    {"id": "in", "kind": "Inport", "params": {"dim": 1}},
    {"id": "k", "kind": "Gain", "params": {"gain": 2}},
    {"id": "out", "kind": "Outport"}
  ],
  "wires": [
    {"src": ["in", 0], "dst": ["k", 0]},
    {"src": ["k", 0], "dst": ["out", 0]}
  ]
})";

Diagnostics diagnostics_of(std::string_view text) {
  try {
    parse_model(text);
  } catch (const DiagnosticError& e) {
    return e.diagnostics();
  }
  ADD_FAILURE() << "expected diagnostics";
  return {};
}

TEST(ParseModel, Minimal) {
  const auto doc = parse_model(kMinimal);
  EXPECT_EQ(doc.graph.blocks.size(), 3u);
  EXPECT_EQ(doc.graph.wires.size(), 2u);
  const auto& g = std::get<blocks::Gain>(doc.graph.find("k")->kind);
  EXPECT_EQ(g.gain, (Matrix{{2.0}}));
  EXPECT_EQ(g.mode, GainMode::Elementwise);
  EXPECT_EQ(doc.graph.blocks[0].region, Region::Executable);
  EXPECT_EQ(doc.graph.wires[0].marker, WireMarker::Plain);
}

TEST(ParseModel, UnknownBlockInWire) {
  std::string text = kMinimal;
  text.replace(text.find(R"("dst": ["k", 0])"), std::strlen(R"("dst": ["k", 0])"),
               R"("dst": ["foo", 0])");
  const auto d = diagnostics_of(text);
  ASSERT_FALSE(d.empty());
  EXPECT_EQ(d[0].code, "SemanticError");
  EXPECT_NE(d[0].message.find("foo"), std::string::npos) << d[0].message;
  EXPECT_EQ(d[0].line, 9);
}

TEST(ParseModel, DuplicateId) {
  std::string text = kMinimal;
  text.replace(text.find(R"("id": "out")"), std::strlen(R"("id": "out")"), R"("id": "k")");
  const auto d = diagnostics_of(text);
  ASSERT_FALSE(d.empty());
  EXPECT_EQ(d[0].code, "SemanticError");
  EXPECT_NE(d[0].message.find("DuplicateId"), std::string::npos);
}

TEST(ParseModel, UnknownKeyHasPosition) {
  std::string text = kMinimal;
  text.replace(text.find(R"("gain": 2)"), std::strlen(R"("gain": 2)"), R"("gain": 2, "gian": 3)");
  const auto d = diagnostics_of(text);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].code, "SchemaError");
  EXPECT_NE(d[0].message.find("gian"), std::string::npos);
  EXPECT_EQ(d[0].line, 5);
  EXPECT_GT(d[0].column, 40);
}

TEST(ParseModel, WrongFieldType) {
  std::string text = kMinimal;
  text.replace(text.find(R"("dim": 1)"), std::strlen(R"("dim": 1)"), R"("dim": "one")");
  const auto d = diagnostics_of(text);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].code, "SchemaError");
  EXPECT_EQ(d[0].line, 4);
}

TEST(ParseModel, SyntaxErrorHasPosition) {
  const auto d = diagnostics_of("{\n  \"version\": \"1\",\n  \"blocks\": [,]\n}");
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].code, "SyntaxError");
  EXPECT_EQ(d[0].line, 3);
}

TEST(ParseModel, VersionAndTopLevel) {
  EXPECT_EQ(diagnostics_of(R"({"version": "2", "blocks": []})")[0].code, "SchemaError");
  EXPECT_EQ(diagnostics_of(R"([1, 2])")[0].code, "SchemaError");
  EXPECT_EQ(diagnostics_of(R"({"blocks": []})")[0].code, "SchemaError");
  EXPECT_EQ(diagnostics_of("")[0].code, "SyntaxError");
}

TEST(ParseModel, CorpusValidates) {
  for (const char* name : kCorpus) {
    SCOPED_TRACE(name);
    const auto doc = parse_model(read_file(corpus_path(name)));
    EXPECT_TRUE(validate(doc.graph).empty());
    EXPECT_EQ(doc.annotations.size(), 1u);
  }
}

TEST(PrintModel, RoundTripCorpus) {
  for (const char* name : kCorpus) {
    SCOPED_TRACE(name);
    const auto doc = parse_model(read_file(corpus_path(name)));
    const std::string printed = print_model(doc);
    const auto again = parse_model(printed);
    EXPECT_TRUE(documents_equal(doc, again));
    EXPECT_EQ(print_model(again), printed);
  }
}

TEST(PrintModel, SeventeenDigits) {
  std::string text = kMinimal;
  text.replace(text.find(R"("gain": 2)"), std::strlen(R"("gain": 2)"),
               R"("gain": [[0.1]], "mode": "matrix")");
  const auto doc = parse_model(text);
  const std::string printed = print_model(doc);
  EXPECT_NE(printed.find("0.10000000000000001"), std::string::npos);
  const auto back = parse_model(printed);
  const double v = std::get<blocks::Gain>(back.graph.find("k")->kind).gain(0, 0);
  EXPECT_EQ(std::memcmp(&v, "\x9a\x99\x99\x99\x99\x99\xb9\x3f", 8), 0);
  EXPECT_EQ(v, 0.1);
}

TEST(PrintModel, AwkwardDoublesRoundTrip) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::uint64_t> bits;
  ModelDocument doc;
  std::vector<double> values;
  while (values.size() < 500) {
    const std::uint64_t b = bits(rng);
    double v;
    std::memcpy(&v, &b, 8);
    if (std::isfinite(v)) values.push_back(v);
  }
  values.push_back(-0.0);
  values.push_back(5e-324);
  doc.graph.blocks = {{"c", blocks::Constant{values}}, {"o", blocks::Scope{}}};
  doc.graph.wires = {{PortRef{"c", 0}, PortRef{"o", 0}}};
  const auto back = parse_model(print_model(doc));
  const auto& got = std::get<blocks::Constant>(back.graph.find("c")->kind).value;
  ASSERT_EQ(got.size(), values.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    EXPECT_EQ(std::memcmp(&got[i], &values[i], 8), 0) << values[i];
}

TEST(PrintModel, SortsBlocksById) {
  const auto doc = parse_model(kMinimal);
  const std::string printed = print_model(doc);
  EXPECT_LT(printed.find("\"in\""), printed.find("\"k\""));
  EXPECT_LT(printed.find("\"k\""), printed.find("\"out\""));
}

TEST(RenderDot, AnnotationStyling) {
  auto doc = parse_model(read_file(corpus_path("adaptive.pbm.json")));
  std::string dot = render_dot(doc);
  EXPECT_EQ(dot.find("color=red"), std::string::npos);
  EXPECT_NE(dot.find("penwidth"), std::string::npos);
  EXPECT_NE(dot.find("x(t)"), std::string::npos);
  EXPECT_EQ(dot.rfind("digraph", 0), 0u);

  doc.graph.blocks.push_back({"v", blocks::QuadraticForm{Matrix{{1.0}}}, Region::Annotation});
  doc.graph.wires.push_back({PortRef{"int_x", 0}, PortRef{"v", 0}});
  dot = render_dot(doc);
  EXPECT_NE(dot.find("color=red"), std::string::npos);
}

// Arbitrary bytes and mutated corpus text always produce a document or
// diagnostics.
TEST(ParseModel, FuzzNeverCrashes) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> byte(0, 255);
  std::uniform_int_distribution<std::size_t> len(0, 64);
  for (int i = 0; i < 3000; ++i) {
    std::string s(len(rng), '\0');
    for (char& c : s) c = static_cast<char>(byte(rng));
    try {
      parse_model(s);
    } catch (const DiagnosticError& e) {
      EXPECT_FALSE(e.diagnostics().empty());
    }
  }
  const std::string base = read_file(corpus_path("double_integrator.pbm.json"));
  for (int i = 0; i < 3000; ++i) {
    std::string s = base;
    std::uniform_int_distribution<std::size_t> pos(0, s.size() - 1);
    for (int k = 0; k < 3; ++k) s[pos(rng)] = static_cast<char>(byte(rng));
    try {
      parse_model(s);
    } catch (const DiagnosticError& e) {
      EXPECT_FALSE(e.diagnostics().empty());
    }
  }
}

}  // namespace
}  // namespace proofblocks
