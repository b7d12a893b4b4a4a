#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "proofblocks/matrix.hpp"

namespace proofblocks {

enum class Region { Executable, Annotation };
enum class WireMarker { Plain, State };
enum class GainMode { Elementwise, Matrix };
enum class ProductMode { Elementwise, Matrix, Dot };
enum class NoiseKind { Zero, UnitPeakUniform, BoundedPower };
enum class AssertCheck { Value, MonotoneDecreasing };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::Zero;
  double bound = 0.0;  // peak for unit_peak_uniform, mean power for bounded_power

  bool operator==(const NoiseSpec&) const = default;
};

namespace blocks {

struct Inport {
  std::size_t dim = 1;
  bool operator==(const Inport&) const = default;
};
struct Outport {
  bool operator==(const Outport&) const = default;
};
struct Constant {
  std::vector<double> value;
  bool operator==(const Constant&) const = default;
};
// A 1x1 gain in elementwise mode scales a signal of any dimension; an n x 1
// gain multiplies an n-vector entrywise; matrix mode maps cols -> rows.
struct Gain {
  Matrix gain;
  GainMode mode = GainMode::Elementwise;
  bool operator==(const Gain&) const = default;
};
struct Sum {
  std::string signs;  // one of '+'/'-' per input
  bool operator==(const Sum&) const = default;
};
// Two inputs. Matrix mode multiplies a scalar by a vector (either side).
struct Product {
  ProductMode mode = ProductMode::Elementwise;
  bool operator==(const Product&) const = default;
};
struct Integrator {
  std::vector<double> initial;
  bool operator==(const Integrator&) const = default;
};
struct UnitDelay {
  std::vector<double> initial;
  bool operator==(const UnitDelay&) const = default;
};
// Zero initial state; continuous or discrete according to the graph.
struct StateSpace {
  Matrix a, b, c, d;
  bool operator==(const StateSpace&) const = default;
};
struct NoiseSource {
  NoiseSpec noise;
  std::size_t dim = 1;
  bool operator==(const NoiseSource&) const = default;
};
// Entrywise c0 + c1 x + c2 x^2 + ...
struct PolyFun {
  std::vector<double> coefficients;
  bool operator==(const PolyFun&) const = default;
};
struct Transpose {
  bool operator==(const Transpose&) const = default;
};
struct QuadraticForm {
  Matrix p;
  bool operator==(const QuadraticForm&) const = default;
};
struct AssertLE0 {
  double tolerance = 1e-9;
  AssertCheck check = AssertCheck::Value;
  std::string label;
  std::string storage;  // QuadraticForm id: kept >= 0, scales the tolerance
  std::size_t from_step = 0;
  double rate_tolerance = 1e-6;
  bool operator==(const AssertLE0&) const = default;
};
struct Scope {
  bool operator==(const Scope&) const = default;
};
struct Mux {
  std::size_t inputs = 2;
  bool operator==(const Mux&) const = default;
};
struct Selector {
  std::vector<std::size_t> indices;
  bool operator==(const Selector&) const = default;
};
struct InfNorm {
  bool operator==(const InfNorm&) const = default;
};
struct RunningMax {
  bool operator==(const RunningMax&) const = default;
};

}  // namespace blocks

using BlockKind =
    std::variant<blocks::Inport, blocks::Outport, blocks::Constant, blocks::Gain, blocks::Sum,
                 blocks::Product, blocks::Integrator, blocks::UnitDelay, blocks::StateSpace,
                 blocks::NoiseSource, blocks::PolyFun, blocks::Transpose, blocks::QuadraticForm,
                 blocks::AssertLE0, blocks::Scope, blocks::Mux, blocks::Selector,
                 blocks::InfNorm, blocks::RunningMax>;

const char* kind_name(const BlockKind& kind);
std::size_t input_count(const BlockKind& kind);
std::size_t output_count(const BlockKind& kind);
// Output at step k depends on inputs at step k.
bool is_feedthrough(const BlockKind& kind);
// Holds a continuous or discrete state.
bool is_dynamic(const BlockKind& kind);

struct Block {
  std::string id;
  BlockKind kind;
  Region region = Region::Executable;

  bool operator==(const Block&) const = default;
};

struct PortRef {
  std::string block;
  std::size_t port = 0;

  auto operator<=>(const PortRef&) const = default;
  std::string to_string() const;
};

struct Wire {
  PortRef src;
  PortRef dst;
  WireMarker marker = WireMarker::Plain;
  std::size_t dim = 0;  // 0 until inferred
};

struct ModelGraph {
  std::vector<Block> blocks;
  std::vector<Wire> wires;
  std::optional<double> sample_time;  // empty = continuous
  std::map<std::string, std::string> metadata;

  bool is_discrete() const { return sample_time.has_value(); }
  const Block* find(const std::string& id) const;
  Block* find(const std::string& id);
  std::string name() const;
};

const char* to_string(Region region);
const char* to_string(NoiseKind kind);

}  // namespace proofblocks
