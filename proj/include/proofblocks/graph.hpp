#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "proofblocks/errors.hpp"
#include "proofblocks/model.hpp"

namespace proofblocks {

// Adjacency view over a ModelGraph. Assumes ids are unique.
class GraphIndex {
 public:
  explicit GraphIndex(const ModelGraph& g);

  std::optional<std::size_t> index_of(const std::string& id) const;
  std::size_t at(const std::string& id) const;
  // Wire index driving each input port, or nullopt if unconnected.
  const std::vector<std::optional<std::size_t>>& inputs(std::size_t block) const {
    return inputs_[block];
  }
  const std::vector<std::size_t>& outputs(std::size_t block) const { return outputs_[block]; }
  // Source block index of the wire driving input `port`.
  std::optional<std::size_t> driver(std::size_t block, std::size_t port) const;

 private:
  const ModelGraph* graph_;
  std::map<std::string, std::size_t> ids_;
  std::vector<std::vector<std::optional<std::size_t>>> inputs_;
  std::vector<std::vector<std::size_t>> outputs_;
};

// validate: structural invariants, region rules, algebraic loops, time
// domain, and dimension consistency. Empty result means the graph is valid.
Diagnostics validate(const ModelGraph& g);

// Fills every wire dim. Throws DiagnosticError (DimensionMismatch /
// Unresolved).
ModelGraph infer_dimensions(const ModelGraph& g);

// Output dimension of every block after inference, indexed like g.blocks.
std::vector<std::size_t> block_output_dims(const ModelGraph& g);

// Restriction to one region. Wires entering from the other region become
// boundary Inports named "boundary.<block>.<port>" in the kept region.
ModelGraph subgraph(const ModelGraph& g, Region region);

// Equality up to block/wire ordering; inferred wire dims are ignored.
bool structurally_equal(const ModelGraph& a, const ModelGraph& b);

// Block indices in evaluation order: feedthrough dependencies first, ties
// broken by block id. Throws Error(AlgebraicLoop).
std::vector<std::size_t> evaluation_order(const ModelGraph& g);

// Strongly connected feedthrough cycles (each listed by block id).
std::vector<std::vector<std::string>> algebraic_loops(const ModelGraph& g);

}  // namespace proofblocks
