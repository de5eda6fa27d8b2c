#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "loom/interpreter.hpp"
#include "loom/programs.hpp"

using namespace loom;

namespace {

int xor_fold(const std::vector<int>& bits) {
  int p = 0;
  for (int b : bits) p ^= (b == 1);
  return p;
}

std::vector<int> random_bits(std::mt19937_64& rng, int len) {
  std::vector<int> bits(len);
  for (int& b : bits) b = static_cast<int>(rng() % 2);
  return bits;
}

std::vector<int> with_start(std::vector<int> bits) {
  bits.insert(bits.begin(), kParityStart);
  return bits;
}

}  // namespace

TEST_CASE("initialize: parity layer-0 stream") {
  ProgramSpec spec = parity_sequential_absolute(8);
  const VarTable& vt = spec.var_table();
  ResidualState st = initialize(spec, {1, 0, 1});
  CHECK(st.positions[0].values[vt.find("parity")] == Value::cat(1));
  CHECK(st.positions[0].values[vt.find("done")] == Value::cat(1));
  CHECK(st.positions[0].values[vt.find("idx")] == Value::cat(0));
  CHECK(st.positions[0].values[vt.find("idx_left")] == Value::cat(0));
  CHECK(st.positions[1].values[vt.find("done")] == Value::cat(0));
  CHECK(st.positions[2].values[vt.find("idx_left")] == Value::cat(1));
  // Attention outputs start null.
  CHECK(st.positions[1].values[vt.find("parity_left")].is_null());
}

TEST_CASE("initialize: errors") {
  ProgramSpec spec = parity_sequential_absolute(4);
  CHECK_THROWS_AS(initialize(spec, {0, 2}), TokenOutOfRangeError);
  CHECK_THROWS_AS(initialize(spec, {0, 1, 0, 1, 1}),
                  PositionRangeExceededError);
}

TEST_CASE("run: empty input returns empty output") {
  ProgramSpec spec = parity_sequential_absolute(8);
  RunResult r = run(spec, {});
  CHECK(r.outputs.empty());
}

TEST_CASE("select: equality oracle") {
  // queries idx_left=[0,0,1] against keys idx=[0,1,2].
  std::vector<Value> queries = {Value::cat(0), Value::cat(0), Value::cat(1)};
  std::vector<Value> keys = {Value::cat(0), Value::cat(1), Value::cat(2)};
  auto s = select(queries, keys);
  // Oracle: nested-loop equality.
  for (size_t i = 0; i < keys.size(); ++i) {
    for (size_t j = 0; j < queries.size(); ++j) {
      CHECK(s[i][j] == (keys[i].cat_id() == queries[j].cat_id()));
    }
  }
}

TEST_CASE("select: set membership and null queries") {
  std::vector<Value> queries = {Value::set({1, 2}), Value::null(),
                                Value::set({0})};
  std::vector<Value> keys = {Value::cat(0), Value::cat(1), Value::cat(2)};
  auto s = select(queries, keys);
  CHECK(!s[0][0]);
  CHECK(s[1][0]);
  CHECK(s[2][0]);
  for (size_t i = 0; i < 3; ++i) CHECK(!s[i][1]);  // null query row
  CHECK(s[0][2]);
  CHECK(!s[1][2]);
}

TEST_CASE("select: relative mask applies after selection") {
  std::vector<Value> queries(3, Value::cat(0));
  std::vector<Value> keys(3, Value::cat(0));
  auto s = select(queries, keys, std::set<int>{-1});
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      CHECK(s[i][j] == (i - j == -1));
    }
  }
}

TEST_CASE("aggregate: categorical uniqueness and numerical mean") {
  // Column j selects rows i with sel[i][j]: column 0 -> row 0, column 1 ->
  // row 1, column 2 -> rows 1 and 2.
  std::vector<std::vector<bool>> sel = {
      {true, false, false},
      {false, true, true},
      {false, false, true},
  };
  std::vector<Value> values = {Value::cat(1), Value::cat(0), Value::cat(1)};
  auto out = aggregate(sel, values, VarKind::Categorical);
  CHECK(out[0] == Value::cat(1));
  CHECK(out[1] == Value::cat(0));
  CHECK(out[2].is_undefined());
  CHECK(out[2].is_ambiguous());

  std::vector<Value> nums = {Value::num(0.0), Value::num(1.0),
                             Value::num(1.0)};
  std::vector<std::vector<bool>> both = {
      {true, false, false},
      {true, false, false},
      {false, false, false},
  };
  auto mean = aggregate(both, nums, VarKind::Numerical);
  CHECK(mean[0].num_value() == doctest::Approx(0.5));
  CHECK(mean[1].is_empty_undefined());
}

TEST_CASE("mlp_step: published worked example") {
  ProgramSpec spec = parity_sequential_relative();
  const VarTable& vt = spec.var_table();
  Assignment a = make_default_assignment(spec);
  a.values[vt.find("parity")] = Value::cat(1);
  a.values[vt.find("done")] = Value::cat(0);
  a.values[vt.find("parity_left")] = Value::cat(1);
  a.values[vt.find("done_left")] = Value::cat(1);
  Assignment out = apply_rules(spec, spec.rules, a);
  CHECK(out.values[vt.find("parity")] == Value::cat(0));
  CHECK(out.values[vt.find("done")] == Value::cat(1));
  CHECK(out.values[vt.find("parity_left")].is_null());
  CHECK(out.values[vt.find("done_left")].is_null());
}

TEST_CASE("mlp_step: no satisfied rule leaves values unchanged") {
  ProgramSpec spec = parity_sequential_relative();
  const VarTable& vt = spec.var_table();
  Assignment a = make_default_assignment(spec);
  a.values[vt.find("parity")] = Value::cat(1);
  a.values[vt.find("done")] = Value::cat(1);
  Assignment out = apply_rules(spec, spec.rules, a);
  CHECK(out == a);
}

TEST_CASE("mlp_step: conflicting rules raise") {
  ProgramSpec spec = parity_sequential_relative();
  ProgramSpec bad = spec;
  bad.invalidate_cache();
  TransitionRule extra;
  extra.antecedent = {{"done", 0}, {"parity", 0}};
  extra.output_var = "parity";
  extra.old_value = 0;
  extra.new_value = 1;
  bad.rules.insert(bad.rules.begin(), extra);
  const VarTable& vt = bad.var_table();
  Assignment a = make_default_assignment(bad);
  a.values[vt.find("parity")] = Value::cat(0);
  a.values[vt.find("done")] = Value::cat(0);
  a.values[vt.find("parity_left")] = Value::cat(1);
  a.values[vt.find("done_left")] = Value::cat(1);
  CHECK_THROWS_AS(apply_rules(bad, bad.rules, a), RuleConflictError);
}

TEST_CASE("mlp_step: decisive read of an ambiguous value raises") {
  ProgramSpec spec = parity_sequential_relative();
  const VarTable& vt = spec.var_table();
  Assignment a = make_default_assignment(spec);
  a.values[vt.find("parity")] = Value::cat(0);
  a.values[vt.find("done")] = Value::cat(0);
  a.values[vt.find("parity_left")] = Value::undefined_ambiguous();
  a.values[vt.find("done_left")] = Value::cat(1);
  CHECK_THROWS_AS(apply_rules(spec, spec.rules, a), UndefinedReadError);
}

TEST_CASE("run: parity fig-3 sequence and layer counts") {
  ProgramSpec spec = parity_sequential_absolute(8);
  RunResult r = run(spec, {1, 0, 1});
  CHECK(r.outputs == std::vector<int>{1, 1, 0});
  CHECK(r.layers_used == 2);
  CHECK(r.halted_all);

  // Single element is already done at initialization.
  RunResult one = run(spec, {0});
  CHECK(one.outputs == std::vector<int>{0});
  CHECK(one.layers_used == 0);

  // Absolute variant halts after N-1 layers.
  for (int n = 2; n <= 8; ++n) {
    std::vector<int> bits(n, 1);
    RunResult rr = run(spec, bits);
    CHECK(rr.layers_used == n - 1);
  }
}

TEST_CASE("run: sum+modulo counts ones in a single layer") {
  ProgramSpec spec = parity_sum_modulo(20);
  RunResult r = run(spec, {kParityStart, 1, 1});
  CHECK(r.outputs.back() == 0);
  CHECK(r.layers_used == 1);
  RunResult r2 = run(spec, {kParityStart, 1, 0, 1, 1});
  CHECK(r2.outputs.back() == 1);
}

TEST_CASE("run: parity correctness, exhaustive to length 12") {
  ProgramSpec abs = parity_sequential_absolute(12);
  ProgramSpec rel = parity_sequential_relative();
  ProgramSpec sum = parity_sum_modulo(12);
  for (int len = 1; len <= 12; ++len) {
    for (int mask = 0; mask < (1 << len); ++mask) {
      std::vector<int> bits(len);
      for (int i = 0; i < len; ++i) bits[i] = (mask >> i) & 1;
      int want = xor_fold(bits);
      if (len <= 8 || mask % 17 == 0) {  // exhaustive short, sampled long
        CHECK(run(abs, bits).outputs.back() == want);
      }
      CHECK(run(rel, with_start(bits)).outputs.back() == want);
      if (mask % 13 == 0) {
        CHECK(run(sum, with_start(bits)).outputs.back() == want);
      }
    }
  }
}

TEST_CASE("run: no halt within max layers is reported with partial trace") {
  ProgramSpec spec = parity_sequential_absolute(8);
  RunOptions opts;
  opts.max_layers = 1;
  opts.record_trace = true;
  RunResult r = run(spec, {1, 1, 1, 1}, opts);
  CHECK(!r.halted_all);
  CHECK(!r.trace.records.empty());
}

TEST_CASE("residual semantics: untouched variables persist across layers") {
  ProgramSpec spec = parity_sequential_absolute(8);
  const VarTable& vt = spec.var_table();
  RunOptions opts;
  opts.record_trace = true;
  RunResult r = run(spec, {1, 0, 1, 1}, opts);
  // idx and idx_left are never written; check them at every record.
  for (const auto& rec : r.trace.records) {
    CHECK(rec.vars.values[vt.find("idx")] == Value::cat(rec.position));
    CHECK(rec.vars.values[vt.find("idx_left")] ==
          Value::cat(rec.position > 0 ? rec.position - 1 : 0));
  }
}

TEST_CASE("halting monotonicity: frozen positions never change") {
  ProgramSpec spec = parity_sequential_absolute(10);
  const VarTable& vt = spec.var_table();
  RunOptions opts;
  opts.record_trace = true;
  RunResult r = run(spec, {1, 1, 0, 1, 0, 1}, opts);
  // Position i halts at layer i; afterwards its assignment is frozen.
  std::map<int, Assignment> frozen;
  for (const auto& rec : r.trace.records) {
    if (rec.layer <= std::max(rec.position, 1)) continue;
    auto it = frozen.find(rec.position);
    if (it == frozen.end()) {
      frozen.emplace(rec.position, rec.vars);
    } else {
      CHECK(rec.vars == it->second);
    }
  }
  (void)vt;
}

TEST_CASE("trace consistency: replaying mlp_in reproduces mlp_out") {
  for (const char* name : {"parity_absolute", "parity_relative",
                           "parity_sum_modulo"}) {
    CAPTURE(name);
    ProgramBundle b = make_program(name);
    std::vector<int> input =
        std::string(name) == "parity_absolute"
            ? std::vector<int>{1, 0, 1, 1, 0}
            : with_start({1, 0, 1, 1, 0});
    RunOptions opts;
    opts.record_trace = true;
    RunResult r = run(b.spec, input, opts);
    std::map<std::pair<int, int>, Assignment> ins;
    for (const auto& rec : r.trace.records) {
      if (rec.stage == TraceStage::MlpIn) {
        ins[{rec.layer, rec.position}] = rec.vars;
      } else if (rec.stage == TraceStage::MlpOut) {
        Assignment replay =
            apply_rules(b.spec, b.spec.rules, ins.at({rec.layer, rec.position}));
        CHECK(replay == rec.vars);
      }
    }
  }
}

TEST_CASE("trace export: jsonl shape") {
  ProgramSpec spec = parity_sequential_absolute(8);
  RunOptions opts;
  opts.record_trace = true;
  opts.example_id = 42;
  RunResult r = run(spec, {1, 0, 1}, opts);
  std::string jsonl = trace_to_jsonl(r.trace, spec);
  CHECK(jsonl.find("\"example_id\":42") != std::string::npos);
  CHECK(jsonl.find("\"stage\":\"mlp_out\"") != std::string::npos);
  // 2 layers x 3 positions x 3 stages.
  size_t lines = std::count(jsonl.begin(), jsonl.end(), '\n');
  CHECK(lines == 18);
}

TEST_CASE("random parity runs agree with the xor oracle") {
  std::mt19937_64 rng(2024);
  ProgramSpec rel = parity_sequential_relative();
  for (int trial = 0; trial < 400; ++trial) {
    int len = 1 + static_cast<int>(rng() % 20);
    std::vector<int> bits = random_bits(rng, len);
    RunResult r = run(rel, with_start(bits));
    CHECK(r.outputs.back() == xor_fold(bits));
    CHECK(r.halted_all);
  }
}
