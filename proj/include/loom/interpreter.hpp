#pragma once

#include <optional>
#include <string>
#include <vector>

#include "loom/enumerate.hpp"
#include "loom/layout.hpp"
#include "loom/program.hpp"

namespace loom {

struct TokenOutOfRangeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct PositionRangeExceededError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Residual stream: one assignment per position plus halting bookkeeping.
struct ResidualState {
  std::vector<Assignment> positions;
  int layer = 0;
  std::vector<bool> halted;
  std::vector<int> halt_layer;  // -1 while running

  size_t size() const { return positions.size(); }
};

enum class TraceStage : std::uint8_t { AttnIn, MlpIn, MlpOut };

const char* trace_stage_name(TraceStage s);

struct TraceRecord {
  std::int64_t example_id = 0;
  int layer = 0;
  int position = 0;
  TraceStage stage = TraceStage::AttnIn;
  Assignment vars;
};

struct Trace {
  std::vector<TraceRecord> records;
};

struct RunOptions {
  std::optional<int> max_layers;  // overrides the program / spec default
  bool record_trace = false;
  std::int64_t example_id = 0;
  // Observes the state right before each MLP sub-layer (after attention);
  // cheaper than full trace recording for coverage-style scans.
  std::function<void(int layer, const ResidualState&)> mlp_in_hook;
};

struct RunResult {
  std::vector<int> outputs;          // output_var value id per position
  std::vector<int> halt_layers;      // per position; -1 if never halted
  int layers_used = 0;
  bool halted_all = true;            // false => NoHaltWithinMaxLayers
  Trace trace;                       // partial on no-halt
};

// Per-spec defaults: 1024 without a halt spec, 4*len+16 with one.
int default_max_layers(const ProgramSpec& spec, size_t seq_len);

ResidualState initialize(const ProgramSpec& spec,
                         const std::vector<int>& input_ids);

// Binary selection matrix, S[key_pos][query_pos]. Null or empty-undefined
// queries/keys select nothing; the optional relative mask zeroes entries
// whose key-minus-query offset is outside the mask.
std::vector<std::vector<bool>> select(
    const std::vector<Value>& queries, const std::vector<Value>& keys,
    const std::optional<std::set<int>>& relative_mask = std::nullopt);

// Aggregates selected values per query position. Categorical heads copy the
// unique selected value (anything else is undefined); numerical heads
// average (empty selections are undefined). Null numerical values average
// in as zero, matching the all-zeros activation encoding.
std::vector<Value> aggregate(const std::vector<std::vector<bool>>& selection,
                             const std::vector<Value>& values,
                             VarKind output_kind);

// One attention sub-layer over the whole state (all heads in parallel).
void attention_step(const ProgramSpec& spec, ResidualState& state);

// Indices of rules not provably dead on sequence-uniform variables; the
// per-position matchers only need to scan these.
std::vector<int> live_rules(const ProgramSpec& spec,
                            const ResidualState& state);

// One MLP sub-layer; simultaneous rule application per position.
void mlp_step(const ProgramSpec& spec, ResidualState& state);

RunResult run(const ProgramSpec& spec, const std::vector<int>& input_ids,
              const RunOptions& opts = {});

// Trace export: JSON-Lines, one record per line.
std::string trace_to_jsonl(const Trace& trace, const ProgramSpec& spec);

}  // namespace loom
