#include "proofblocks/model.hpp"

#include <algorithm>

namespace proofblocks {

namespace {
template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;
}  // namespace

const char* kind_name(const BlockKind& kind) {
  return std::visit(
      overloaded{
          [](const blocks::Inport&) { return "Inport"; },
          [](const blocks::Outport&) { return "Outport"; },
          [](const blocks::Constant&) { return "Constant"; },
          [](const blocks::Gain&) { return "Gain"; },
          [](const blocks::Sum&) { return "Sum"; },
          [](const blocks::Product&) { return "Product"; },
          [](const blocks::Integrator&) { return "Integrator"; },
          [](const blocks::UnitDelay&) { return "UnitDelay"; },
          [](const blocks::StateSpace&) { return "StateSpace"; },
          [](const blocks::NoiseSource&) { return "NoiseSource"; },
          [](const blocks::PolyFun&) { return "PolyFun"; },
          [](const blocks::Transpose&) { return "Transpose"; },
          [](const blocks::QuadraticForm&) { return "QuadraticForm"; },
          [](const blocks::AssertLE0&) { return "AssertLE0"; },
          [](const blocks::Scope&) { return "Scope"; },
          [](const blocks::Mux&) { return "Mux"; },
          [](const blocks::Selector&) { return "Selector"; },
          [](const blocks::InfNorm&) { return "InfNorm"; },
          [](const blocks::RunningMax&) { return "RunningMax"; },
      },
      kind);
}

std::size_t input_count(const BlockKind& kind) {
  return std::visit(overloaded{
                        [](const blocks::Inport&) -> std::size_t { return 0; },
                        [](const blocks::Constant&) -> std::size_t { return 0; },
                        [](const blocks::NoiseSource&) -> std::size_t { return 0; },
                        [](const blocks::Sum& s) -> std::size_t { return s.signs.size(); },
                        [](const blocks::Product&) -> std::size_t { return 2; },
                        [](const blocks::Mux& m) -> std::size_t { return m.inputs; },
                        [](const auto&) -> std::size_t { return 1; },
                    },
                    kind);
}

std::size_t output_count(const BlockKind& kind) {
  return std::visit(overloaded{
                        [](const blocks::Outport&) -> std::size_t { return 0; },
                        [](const blocks::AssertLE0&) -> std::size_t { return 0; },
                        [](const blocks::Scope&) -> std::size_t { return 0; },
                        [](const auto&) -> std::size_t { return 1; },
                    },
                    kind);
}

bool is_feedthrough(const BlockKind& kind) {
  return std::visit(overloaded{
                        [](const blocks::Integrator&) { return false; },
                        [](const blocks::UnitDelay&) { return false; },
                        [](const blocks::StateSpace& s) { return s.d.max_abs() != 0.0; },
                        [](const auto&) { return true; },
                    },
                    kind);
}

bool is_dynamic(const BlockKind& kind) {
  return std::holds_alternative<blocks::Integrator>(kind) ||
         std::holds_alternative<blocks::UnitDelay>(kind) ||
         std::holds_alternative<blocks::StateSpace>(kind) ||
         std::holds_alternative<blocks::RunningMax>(kind);
}

std::string PortRef::to_string() const { return block + ":" + std::to_string(port); }

const Block* ModelGraph::find(const std::string& id) const {
  auto it = std::find_if(blocks.begin(), blocks.end(), [&](const Block& b) { return b.id == id; });
  return it == blocks.end() ? nullptr : &*it;
}

Block* ModelGraph::find(const std::string& id) {
  auto it = std::find_if(blocks.begin(), blocks.end(), [&](const Block& b) { return b.id == id; });
  return it == blocks.end() ? nullptr : &*it;
}

std::string ModelGraph::name() const {
  auto it = metadata.find("name");
  return it == metadata.end() || it->second.empty() ? "model" : it->second;
}

const char* to_string(Region region) {
  return region == Region::Executable ? "executable" : "annotation";
}

const char* to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::Zero: return "zero";
    case NoiseKind::UnitPeakUniform: return "unit_peak_uniform";
    case NoiseKind::BoundedPower: return "bounded_power";
  }
  return "zero";
}

}  // namespace proofblocks
