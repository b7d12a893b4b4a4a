#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "proofblocks/model.hpp"
#include "proofblocks/tolerances.hpp"

namespace proofblocks {

enum class SimMethod { ExactDiscrete, Rk4 };

const char* to_string(SimMethod method);

struct SimConfig {
  double horizon = 10.0;
  double h_sim = 1e-3;  // continuous graphs only; discrete graphs step at sample_time
  std::uint64_t seed = 0;
  std::optional<SimMethod> method;  // defaults from the graph's time domain
  // Per-step samples for executable Inports (and boundary inputs). Missing
  // ports or steps read as zero.
  std::map<std::string, std::vector<std::vector<double>>> inputs;
  const CancellationToken* cancel = nullptr;
};

struct AssertionSample {
  std::size_t step = 0;
  double value = 0.0;
  bool pass = true;
};

struct Trace {
  double step = 0.0;
  std::vector<double> times;
  // One column per scalar signal: "<block>" for scalar outputs, "<block>[i]"
  // for vector components.
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;  // rows[step][column]
  std::map<std::string, std::vector<AssertionSample>> assertion_log;

  std::optional<std::size_t> column_index(const std::string& name) const;
  // Throws Error(UnresolvedWire) for an unknown column.
  std::vector<double> column(const std::string& name) const;
  std::size_t steps() const { return times.size(); }
};

// Column name of component i of a block output of dimension dim.
std::string trace_column(const std::string& block, std::size_t i, std::size_t dim);

// Counter-based generator used for noise streams.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();
  double uniform();  // [0, 1)

 private:
  std::uint64_t state_;
};

// Independent stream for one NoiseSource block.
SplitMix64 noise_stream(std::uint64_t seed, std::string_view block_id);

// Throws Error(NonfiniteSignal) naming the step and block, PreconditionViolation
// for a non-positive horizon or step, DiagnosticError for invalid graphs.
Trace simulate(const ModelGraph& g, const SimConfig& cfg = {}, const Tolerances& tol = {});

struct AssertionOutcome {
  std::string id;
  std::string label;
  bool pass = true;
  std::optional<std::size_t> first_violation;
  std::map<std::string, double> witness;
  // S(0) - S(N) for dissipation ledgers: the accumulated supply
  // sum (a^2 w'w - y'y) h + V(x0) - V(xN).
  std::optional<double> ledger;
};

struct CheckReport {
  std::vector<AssertionOutcome> assertions;
  bool all_pass() const;
  const AssertionOutcome* find(const std::string& id) const;
};

// Value assertions: s <= tol (1 + |V|). Monotone assertions: ds/h <= rate_tol
// (1 + max|s|). Storage signals must stay >= -tol.
CheckReport check_assertions(const Trace& t, const ModelGraph& g);

std::string trace_to_csv(const Trace& t);
// {"assertions": [{id, label, pass, first_violation, witness, ledger?}]}
std::string report_to_json(const CheckReport& r);

struct DataflowAnnotation {
  std::string kind;  // word after "--@", e.g. "ensures"
  std::string key;   // text before the first ':' (empty when absent)
  std::string text;  // the remainder
};

struct DataflowProgram {
  std::string node;
  std::vector<std::string> inputs, outputs, locals;
  std::vector<DataflowAnnotation> annotations;
};

// Parses the dataflow target. Throws Error(ParseError).
DataflowProgram parse_dataflow(std::string_view text);

// Runs `steps` steps. inputs[name][k] is the value of node input `name` at
// step k (missing steps read as zero). Columns are the node variables in
// declaration order. Throws Error(ParseError).
Trace interpret_dataflow(std::string_view text,
                         const std::map<std::string, std::vector<double>>& inputs,
                         std::size_t steps);

}  // namespace proofblocks
