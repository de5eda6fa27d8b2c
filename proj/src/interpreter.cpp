#include "loom/interpreter.hpp"

#include <json.hpp>

#include "loom/json_io.hpp"

namespace loom {

const char* trace_stage_name(TraceStage s) {
  switch (s) {
    case TraceStage::AttnIn:
      return "attn_in";
    case TraceStage::MlpIn:
      return "mlp_in";
    case TraceStage::MlpOut:
      return "mlp_out";
  }
  return "?";
}

int default_max_layers(const ProgramSpec& spec, size_t seq_len) {
  if (spec.default_max_layers) return *spec.default_max_layers;
  if (spec.halt) return 4 * static_cast<int>(seq_len) + 16;
  return 1024;
}

ResidualState initialize(const ProgramSpec& spec,
                         const std::vector<int>& input_ids) {
  const VarTable& vt = spec.var_table();
  for (int x : input_ids) {
    if (x < 0 || x >= spec.input_range) {
      throw TokenOutOfRangeError("token " + std::to_string(x) +
                                 " outside [0, " +
                                 std::to_string(spec.input_range) + ")");
    }
  }
  bool needs_positions = false;
  for (const auto& v : spec.variables) {
    if (v.init.kind == VarInit::Kind::Position) needs_positions = true;
  }
  if (needs_positions && spec.position_range &&
      static_cast<int>(input_ids.size()) > *spec.position_range) {
    throw PositionRangeExceededError(
        "sequence length " + std::to_string(input_ids.size()) +
        " exceeds position_range " + std::to_string(*spec.position_range));
  }

  ResidualState state;
  state.positions.reserve(input_ids.size());
  for (size_t i = 0; i < input_ids.size(); ++i) {
    Assignment a = make_default_assignment(spec);
    for (size_t vi = 0; vi < spec.variables.size(); ++vi) {
      const VariableSpec& v = spec.variables[vi];
      int slot = vt.find(v.name);
      switch (v.init.kind) {
        case VarInit::Kind::Input:
          a.values[slot] = v.init.table[input_ids[i]];
          break;
        case VarInit::Kind::Position:
          a.values[slot] = static_cast<int>(i) <
                                   static_cast<int>(v.init.table.size())
                               ? v.init.table[i]
                               : v.default_value;
          break;
        case VarInit::Kind::Constant:
          a.values[slot] = v.init.constant;
          break;
        case VarInit::Kind::None:
          a.values[slot] = v.default_value;
          break;
      }
    }
    state.positions.push_back(std::move(a));
  }
  state.halted.assign(input_ids.size(), false);
  state.halt_layer.assign(input_ids.size(), -1);
  return state;
}

std::vector<std::vector<bool>> select(
    const std::vector<Value>& queries, const std::vector<Value>& keys,
    const std::optional<std::set<int>>& relative_mask) {
  size_t n = queries.size();
  std::vector<std::vector<bool>> s(n, std::vector<bool>(n, false));
  for (size_t j = 0; j < n; ++j) {
    const Value& q = queries[j];
    if (q.is_ambiguous()) {
      throw UndefinedReadError("ambiguous attention query");
    }
    if (!q.is_defined()) continue;  // selects nothing
    for (size_t i = 0; i < n; ++i) {
      const Value& k = keys[i];
      if (k.is_ambiguous()) {
        throw UndefinedReadError("ambiguous attention key");
      }
      if (!k.is_defined()) continue;
      bool hit = false;
      if (q.kind() == Value::Kind::Cat) {
        hit = k.kind() == Value::Kind::Cat && k.cat_id() == q.cat_id();
      } else if (q.kind() == Value::Kind::Set) {
        if (k.kind() == Value::Kind::Cat) {
          const auto& elems = q.set_elems();
          hit = std::find(elems.begin(), elems.end(), k.cat_id()) !=
                elems.end();
        }
      }
      if (hit && relative_mask) {
        int offset = static_cast<int>(i) - static_cast<int>(j);
        if (!relative_mask->count(offset)) hit = false;
      }
      s[i][j] = hit;
    }
  }
  return s;
}

std::vector<Value> aggregate(const std::vector<std::vector<bool>>& selection,
                             const std::vector<Value>& values,
                             VarKind output_kind) {
  size_t n = values.size();
  std::vector<Value> out(n, Value::undefined_empty());
  for (size_t j = 0; j < n; ++j) {
    int count = 0;
    int only = -1;
    double sum = 0.0;
    for (size_t i = 0; i < n; ++i) {
      if (!selection[i][j]) continue;
      ++count;
      only = static_cast<int>(i);
      if (output_kind == VarKind::Numerical) {
        const Value& v = values[i];
        if (v.is_ambiguous()) {
          throw UndefinedReadError("ambiguous value aggregated");
        }
        if (v.kind() == Value::Kind::Num) sum += v.num_value();
        // Null / empty contribute zero, like their activation encoding.
      }
    }
    if (output_kind == VarKind::Numerical) {
      out[j] = count == 0 ? Value::undefined_empty()
                          : Value::num(sum / count);
    } else {
      if (count == 1) {
        const Value& v = values[only];
        if (v.is_ambiguous()) {
          throw UndefinedReadError("ambiguous value aggregated");
        }
        out[j] = v;
      } else if (count == 0) {
        out[j] = Value::undefined_empty();
      } else {
        out[j] = Value::undefined_ambiguous();
      }
    }
  }
  return out;
}

void attention_step(const ProgramSpec& spec, ResidualState& state) {
  const VarTable& vt = spec.var_table();
  size_t n = state.size();
  std::vector<std::vector<Value>> head_outputs;
  head_outputs.reserve(spec.heads.size());
  for (const auto& h : spec.heads) {
    int qv = vt.find(h.query);
    int kv = vt.find(h.key);
    int vv = vt.find(h.value);
    std::vector<Value> queries(n), keys(n), values(n);
    for (size_t i = 0; i < n; ++i) {
      queries[i] = state.positions[i].values[qv];
      keys[i] = state.positions[i].values[kv];
      values[i] = state.positions[i].values[vv];
    }
    auto sel = select(queries, keys, h.relative_mask);
    head_outputs.push_back(aggregate(sel, values, h.output_kind));
  }
  for (size_t hi = 0; hi < spec.heads.size(); ++hi) {
    int ov = vt.find(spec.heads[hi].name);
    for (size_t i = 0; i < n; ++i) {
      if (state.halted[i]) continue;
      state.positions[i].values[ov] = head_outputs[hi][i];
    }
  }
}

namespace {

// Applies one prepared rule to one position; mirrors apply_rules.
void apply_candidates(const ProgramSpec& spec,
                      const std::vector<PreparedRule>& prepared,
                      const std::vector<int>& candidates,
                      const Assignment& in, Assignment& out) {
  const VarTable& vt = spec.var_table();
  static thread_local std::vector<int> writer;
  writer.assign(vt.entries.size(), -1);
  for (int ri : candidates) {
    const PreparedRule& r = prepared[ri];
    bool sat = true;
    bool pending_ambiguous = false;
    for (const auto& [v, id] : r.constraints) {
      MatchState st = constraint_state(vt.entries[v], in.values[v], id);
      if (st == MatchState::Mismatch) {
        sat = false;
        break;
      }
      if (st == MatchState::Ambiguous) pending_ambiguous = true;
    }
    if (!sat) continue;
    if (pending_ambiguous) {
      throw UndefinedReadError(
          "rule for '" + vt.entries[r.out_var].name +
          "' is decided by an ambiguous attention output");
    }
    if (writer[r.out_var] >= 0) {
      throw RuleConflictError("rules #" + std::to_string(writer[r.out_var]) +
                              " and #" + std::to_string(ri) +
                              " both write '" + vt.entries[r.out_var].name +
                              "'");
    }
    writer[r.out_var] = ri;
    out.values[r.out_var] = r.new_value == TransitionRule::kNullValue
                                ? Value::null()
                                : vt.value_from_discrete(r.out_var,
                                                         r.new_value);
  }
}

}  // namespace

std::vector<int> live_rules(const ProgramSpec& spec,
                            const ResidualState& state) {
  const VarTable& vt = spec.var_table();
  const auto& prepared = spec.prepared_rules();
  size_t n = state.size();
  std::vector<int> candidates;
  if (n == 0) return candidates;

  // Broadcast variables hold one value across the whole sequence; a rule
  // whose constraint provably fails on one of them is dead for this layer,
  // which cuts the per-position scan to a handful of rules.
  size_t nvars = vt.entries.size();
  std::vector<char> uniform(nvars, 1);
  const Assignment& first = state.positions[0];
  for (size_t v = 0; v < nvars; ++v) {
    for (size_t i = 1; i < n; ++i) {
      if (!(state.positions[i].values[v] == first.values[v])) {
        uniform[v] = 0;
        break;
      }
    }
  }
  candidates.reserve(64);
  for (size_t ri = 0; ri < prepared.size(); ++ri) {
    bool alive = true;
    for (const auto& [v, id] : prepared[ri].constraints) {
      if (!uniform[v]) continue;
      if (constraint_state(vt.entries[v], first.values[v], id) ==
          MatchState::Mismatch) {
        alive = false;
        break;
      }
    }
    if (alive) candidates.push_back(static_cast<int>(ri));
  }
  return candidates;
}

void mlp_step(const ProgramSpec& spec, ResidualState& state) {
  if (state.size() == 0) return;
  const auto& prepared = spec.prepared_rules();
  std::vector<int> candidates = live_rules(spec, state);
  for (size_t i = 0; i < state.size(); ++i) {
    if (state.halted[i]) continue;
    Assignment out = state.positions[i];
    apply_candidates(spec, prepared, candidates, state.positions[i], out);
    state.positions[i] = std::move(out);
  }
}

namespace {

void record_stage(const ProgramSpec& spec, const ResidualState& state,
                  TraceStage stage, const RunOptions& opts, Trace& trace) {
  (void)spec;
  if (!opts.record_trace) return;
  for (size_t i = 0; i < state.size(); ++i) {
    trace.records.push_back({opts.example_id, state.layer,
                             static_cast<int>(i), stage, state.positions[i]});
  }
}

void check_halts(const ProgramSpec& spec, ResidualState& state) {
  if (!spec.halt) return;
  const VarTable& vt = spec.var_table();
  int hv = vt.find(spec.halt->var);
  for (size_t i = 0; i < state.size(); ++i) {
    if (state.halted[i]) continue;
    const Value& v = state.positions[i].values[hv];
    if (v.kind() == Value::Kind::Cat && v.cat_id() == spec.halt->value) {
      state.halted[i] = true;
      state.halt_layer[i] = state.layer;
    }
  }
}

bool all_halted(const ResidualState& state) {
  for (bool h : state.halted) {
    if (!h) return false;
  }
  return true;
}

}  // namespace

RunResult run(const ProgramSpec& spec, const std::vector<int>& input_ids,
              const RunOptions& opts) {
  RunResult result;
  if (input_ids.empty()) return result;

  ResidualState state = initialize(spec, input_ids);
  int max_layers =
      opts.max_layers.value_or(default_max_layers(spec, input_ids.size()));

  check_halts(spec, state);  // halting is a sub-layer-boundary condition
  while (!(spec.halt && all_halted(state)) && state.layer < max_layers) {
    state.layer += 1;
    record_stage(spec, state, TraceStage::AttnIn, opts, result.trace);
    attention_step(spec, state);
    record_stage(spec, state, TraceStage::MlpIn, opts, result.trace);
    if (opts.mlp_in_hook) opts.mlp_in_hook(state.layer, state);
    mlp_step(spec, state);
    record_stage(spec, state, TraceStage::MlpOut, opts, result.trace);
    check_halts(spec, state);
  }

  const VarTable& vt = spec.var_table();
  int out_var = vt.find(spec.output_var);
  for (size_t i = 0; i < state.size(); ++i) {
    const Value& v = state.positions[i].values[out_var];
    result.outputs.push_back(v.kind() == Value::Kind::Cat ? v.cat_id() : -1);
  }
  result.halt_layers = state.halt_layer;
  result.layers_used = state.layer;
  result.halted_all = !spec.halt || all_halted(state);
  return result;
}

std::string trace_to_jsonl(const Trace& trace, const ProgramSpec& spec) {
  const VarTable& vt = spec.var_table();
  std::string out;
  for (const auto& r : trace.records) {
    nlohmann::json j;
    j["example_id"] = r.example_id;
    j["layer"] = r.layer;
    j["position"] = r.position;
    j["stage"] = trace_stage_name(r.stage);
    nlohmann::json vars;
    for (size_t v = 0; v < r.vars.values.size(); ++v) {
      vars[vt.entries[v].name] = value_to_json(r.vars.values[v]);
    }
    j["vars"] = std::move(vars);
    out += j.dump();
    out += "\n";
  }
  return out;
}

}  // namespace loom
