#include <cmath>

#include "loom/builder.hpp"
#include "loom/programs.hpp"
#include "loom/validate.hpp"

namespace loom {

namespace {

std::vector<Value> table_from_fn(int n, const std::function<Value(int)>& fn) {
  std::vector<Value> t;
  t.reserve(n);
  for (int i = 0; i < n; ++i) t.push_back(fn(i));
  return t;
}

// parity := parity_left ^ parity, then done := 1, when the left neighbor is
// done and this position is not. Rule order matches the compiled layout the
// tests pin down: the two parity updates first, then the done update.
void parity_transition_rules(RuleBuilder& b) {
  b.get("done", [&](const Value& done) {
    if (done.cat_id() == 1) return;
    b.get("done_left", [&](const Value& done_left) {
      if (done_left.cat_id() != 1) return;
      b.get({"parity_left", "parity"}, [&](const std::vector<Value>& t) {
        b.set("parity", t[0].cat_id() ^ t[1].cat_id());
      });
      b.set("done", 1);
    });
  });
}

}  // namespace

ProgramSpec parity_sequential_absolute(int num_pos) {
  ProgramSpec spec;
  spec.input_range = 2;
  spec.position_range = num_pos;
  spec.variables = {
      VariableSpec::categorical(
          "parity", 2,
          VarInit::input_table(table_from_fn(2, [](int x) {
            return Value::cat(x);
          }))),
      VariableSpec::categorical(
          "done", 2,
          VarInit::position_table(table_from_fn(num_pos, [](int i) {
            return Value::cat(i == 0 ? 1 : 0);
          }))),
      VariableSpec::categorical(
          "idx", num_pos,
          VarInit::position_table(table_from_fn(num_pos, [](int i) {
            return Value::cat(i);
          }))),
      VariableSpec::categorical(
          "idx_left", num_pos,
          VarInit::position_table(table_from_fn(num_pos, [](int i) {
            return Value::cat(i > 0 ? i - 1 : 0);
          }))),
  };
  spec.heads = {
      AttentionHeadSpec::qkv("parity_left", "idx_left", "idx", "parity"),
      AttentionHeadSpec::qkv("done_left", "idx_left", "idx", "done"),
  };
  finalize_variables(spec);
  RuleBuilder b(spec);
  parity_transition_rules(b);
  spec.rules = b.take_rules();
  spec.output_var = "parity";
  spec.halt = HaltSpec{"done", 1};
  spec = add_reset_rules(std::move(spec));
  require_valid(spec);
  return spec;
}

ProgramSpec parity_sequential_relative() {
  ProgramSpec spec;
  spec.input_range = 3;  // 0, 1, START
  spec.variables = {
      VariableSpec::categorical(
          "parity", 2,
          VarInit::input_table(table_from_fn(3, [](int x) {
            return Value::cat(x == kParityStart ? 0 : x);
          }))),
      VariableSpec::categorical(
          "done", 2,
          VarInit::input_table(table_from_fn(3, [](int x) {
            return Value::cat(x == kParityStart ? 1 : 0);
          }))),
  };
  spec.heads = {
      AttentionHeadSpec::relative("parity_left", "parity", -1),
      AttentionHeadSpec::relative("done_left", "done", -1),
  };
  finalize_variables(spec);
  RuleBuilder b(spec);
  parity_transition_rules(b);
  spec.rules = b.take_rules();
  spec.output_var = "parity";
  spec.halt = HaltSpec{"done", 1};
  spec = add_reset_rules(std::move(spec));
  require_valid(spec);
  return spec;
}

namespace {

ProgramSpec parity_sum_modulo_impl(int max_ones, bool with_count_var) {
  // The head averages `start` (1 at START, 0 elsewhere) over START plus all
  // one-positions, giving 1/(ones+1). Buckets enumerate the attainable
  // values in increasing order.
  std::vector<double> buckets;
  for (int k = max_ones; k >= 0; --k) buckets.push_back(1.0 / (k + 1));

  ProgramSpec spec;
  spec.input_range = 3;
  spec.variables = {
      VariableSpec::categorical("parity", 2),
      VariableSpec::numerical(
          "start", {0.0, 1.0},
          VarInit::input_table(table_from_fn(3, [](int x) {
            return Value::num(x == kParityStart ? 1.0 : 0.0);
          }))),
      VariableSpec::categorical(
          "start_or_one", 2,
          VarInit::input_table(table_from_fn(3, [](int x) {
            return Value::cat(x == 1 || x == kParityStart ? 1 : 0);
          }))),
      VariableSpec::categorical("query", 2, VarInit::none(), Value::cat(1)),
  };
  if (with_count_var) {
    spec.variables.push_back(
        VariableSpec::categorical("num_ones", max_ones + 1));
  }
  AttentionHeadSpec head =
      AttentionHeadSpec::qkv("x", "query", "start_or_one", "start");
  head.output_kind = VarKind::Numerical;
  head.output_buckets = buckets;
  spec.heads = {head};
  finalize_variables(spec);

  RuleBuilder b(spec);
  b.get({"x", "parity"}, [&](const std::vector<Value>& t) {
    int ones = static_cast<int>(std::lround(1.0 / t[0].num_value())) - 1;
    b.set("parity", ones % 2);
  });
  if (with_count_var) {
    b.get({"x", "num_ones"}, [&](const std::vector<Value>& t) {
      int ones = static_cast<int>(std::lround(1.0 / t[0].num_value())) - 1;
      if (t[1].cat_id() == 0) b.set("num_ones", ones);
    });
  }
  spec.rules = b.take_rules();
  spec.output_var = "parity";
  spec.default_max_layers = 1;  // stabilizes after a single layer
  spec = add_reset_rules(std::move(spec));
  require_valid(spec);
  return spec;
}

}  // namespace

ProgramSpec parity_sum_modulo(int max_ones) {
  return parity_sum_modulo_impl(max_ones, false);
}

ProgramSpec parity_sum_modulo_categorical(int max_ones) {
  return parity_sum_modulo_impl(max_ones, true);
}

}  // namespace loom
