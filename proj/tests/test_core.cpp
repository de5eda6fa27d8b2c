#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "loom/builder.hpp"
#include "loom/enumerate.hpp"
#include "loom/json_io.hpp"
#include "loom/layout.hpp"
#include "loom/programs.hpp"
#include "loom/validate.hpp"

using namespace loom;

namespace {

// Expected 7-rule parity set (antecedents as (var, value) sets).
struct ExpectedRule {
  std::vector<std::pair<std::string, int>> ante;
  std::string out;
  int old_v;
  int new_v;  // -1 for null
};

const std::vector<ExpectedRule>& parity_expected_rules() {
  static const std::vector<ExpectedRule> rules = {
      {{{"done", 0}, {"done_left", 1}, {"parity_left", 1}, {"parity", 0}},
       "parity", 0, 1},
      {{{"done", 0}, {"done_left", 1}, {"parity_left", 1}, {"parity", 1}},
       "parity", 1, 0},
      {{{"done", 0}, {"done_left", 1}}, "done", 0, 1},
      {{{"parity_left", 0}}, "parity_left", 0, -1},
      {{{"parity_left", 1}}, "parity_left", 1, -1},
      {{{"done_left", 0}}, "done_left", 0, -1},
      {{{"done_left", 1}}, "done_left", 1, -1},
  };
  return rules;
}

bool rule_matches(const TransitionRule& r, const ExpectedRule& e) {
  if (r.output_var != e.out || r.old_value != e.old_v) return false;
  int want_new = e.new_v == -1 ? TransitionRule::kNullValue : e.new_v;
  if (r.new_value != want_new) return false;
  if (r.antecedent.size() != e.ante.size()) return false;
  for (const auto& [var, val] : e.ante) {
    bool found = false;
    for (const auto& c : r.antecedent) {
      if (c.var == var && c.value == val) found = true;
    }
    if (!found) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("validate: bundled parity program has no errors") {
  ProgramSpec spec = parity_sequential_absolute(8);
  ValidationReport rep = validate_program(spec);
  CHECK(rep.ok());
}

TEST_CASE("validate: numerical output variable is rejected") {
  ProgramSpec spec;
  spec.input_range = 2;
  spec.variables = {VariableSpec::numerical("x", {0.0, 1.0})};
  spec.output_var = "x";
  ValidationReport rep = validate_program(spec);
  CHECK(!rep.ok());
  bool found = false;
  for (const auto& i : rep.errors()) {
    if (i.message.find("must be categorical") != std::string::npos) {
      found = true;
    }
  }
  CHECK(found);
}

TEST_CASE("validate: duplicate head output") {
  ProgramSpec spec;
  spec.input_range = 2;
  spec.variables = {
      VariableSpec::categorical("q", 2),
      VariableSpec::categorical("k", 2),
      VariableSpec::categorical("v", 2),
      VariableSpec::categorical("out", 2),
  };
  spec.heads = {AttentionHeadSpec::qkv("x", "q", "k", "v"),
                AttentionHeadSpec::qkv("x", "q", "k", "v")};
  finalize_variables(spec);
  spec.output_var = "out";
  ValidationReport rep = validate_program(spec);
  bool found = false;
  for (const auto& i : rep.errors()) {
    if (i.message.find("duplicate head output") != std::string::npos) {
      found = true;
    }
  }
  CHECK(found);
}

TEST_CASE("layout: parity dimensions and determinism") {
  ProgramSpec spec = parity_sequential_absolute(8);
  VarLayout layout(spec);
  // parity(2) + done(2) + idx(8) + idx_left(8) + two binary head outputs.
  CHECK(layout.d_model() == 24);
  CHECK(layout.slot("parity", 1) == 1);
  CHECK(layout.slot("done", 0) == 2);
  auto [var, value] = layout.inverse(layout.slot("done_left", 1));
  CHECK(spec.var_table().entries[var].name == "done_left");
  CHECK(value == 1);
}

TEST_CASE("layout: single variable and numerical widths") {
  ProgramSpec spec;
  spec.input_range = 1;
  spec.variables = {VariableSpec::categorical("v", 5)};
  spec.output_var = "v";
  VarLayout layout(spec);
  CHECK(layout.d_model() == 5);
  CHECK(layout.slot("v", 3) == 3);

  ProgramSpec spec2;
  spec2.input_range = 1;
  std::vector<double> buckets;
  for (int i = 0; i < 10; ++i) buckets.push_back(i);
  spec2.variables = {VariableSpec::numerical("x", buckets),
                     VariableSpec::categorical("v", 2)};
  spec2.output_var = "v";
  VarLayout layout2(spec2);
  CHECK(layout2.d_model() == 3);  // one scalar dimension plus v
}

TEST_CASE("layout: encode/decode round trip incl. sets and numericals") {
  ProgramSpec spec;
  spec.input_range = 4;
  spec.variables = {
      VariableSpec::categorical("a", 3),
      VariableSpec::numerical("x", {0.25, 0.5, 1.0}),
      VariableSpec::set_var("s", 4, {{0}, {1, 2}, {0, 3}, {1, 3}}),
      VariableSpec::categorical("b", 2),
  };
  spec.heads = {AttentionHeadSpec::qkv("h", "a", "a", "b")};
  finalize_variables(spec);
  spec.output_var = "b";
  const VarTable& vt = spec.var_table();
  VarLayout layout(spec);

  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    Assignment a = make_default_assignment(spec);
    a.values[vt.find("a")] = Value::cat(static_cast<int>(rng() % 3));
    a.values[vt.find("x")] =
        Value::num(std::vector<double>{0.25, 0.5, 1.0}[rng() % 3]);
    const auto& sets = spec.variables[2].allowed_sets;
    a.values[vt.find("s")] = Value::set(sets[rng() % sets.size()]);
    a.values[vt.find("b")] = Value::cat(static_cast<int>(rng() % 2));
    a.values[vt.find("h")] =
        rng() % 2 ? Value::cat(static_cast<int>(rng() % 2)) : Value::null();
    Assignment back = layout.decode(layout.encode(a, vt), vt);
    CHECK(back == a);
  }
}

TEST_CASE("builder: parity rules match the published seven") {
  ProgramSpec spec = parity_sequential_relative();
  REQUIRE(spec.rules.size() == 7);
  for (size_t i = 0; i < 7; ++i) {
    CAPTURE(i);
    CHECK(rule_matches(spec.rules[i], parity_expected_rules()[i]));
  }
}

TEST_CASE("builder: no-op set emits nothing, out-of-scope set throws") {
  ProgramSpec spec = parity_sequential_relative();
  RuleBuilder b(spec);
  b.get("done", [&](const Value& done) {
    if (done.cat_id() == 1) b.set("done", 1);  // no-op
  });
  CHECK(b.rules().empty());
  CHECK_THROWS_AS(b.set("parity", 1), BuilderError);
  // Re-getting a variable already in scope is an error.
  CHECK_THROWS_AS(
      b.get("done", [&](const Value&) { b.get("done", [](const Value&) {}); }),
      BuilderError);
}

TEST_CASE("builder: determinism across runs") {
  ProgramSpec a = parity_sequential_relative();
  ProgramSpec b = parity_sequential_relative();
  REQUIRE(a.rules.size() == b.rules.size());
  for (size_t i = 0; i < a.rules.size(); ++i) {
    CHECK(a.rules[i] == b.rules[i]);
  }
}

namespace {

// The published parity MLP function, written against the ffn view.
void parity_ffn(FfnView& z) {
  if (!z.eq("done", 1) && z.eq("done_left", 1)) {
    z.set("parity", z.cat("parity_left") ^ z.cat("parity"));
    z.set("done", 1);
  }
}

}  // namespace

TEST_CASE("enumerate: parity ffn reproduces the authored rules") {
  ProgramSpec spec = parity_sequential_absolute(8);
  EnumerateOptions opts;
  opts.excluded = {"idx", "idx_left"};
  auto rules = enumerate_rules(spec, parity_ffn, opts);
  // Same three authored rules as the builder, as a set.
  REQUIRE(rules.size() == 3);
  int found = 0;
  for (const auto& e : parity_expected_rules()) {
    if (e.new_v == -1) continue;  // resets come from add_reset_rules
    for (const auto& r : rules) {
      if (rule_matches(r, e)) ++found;
    }
  }
  CHECK(found == 3);
}

TEST_CASE("enumerate: ffn that never writes yields no rules") {
  ProgramSpec spec = parity_sequential_relative();
  auto rules = enumerate_rules(spec, [](FfnView&) {});
  CHECK(rules.empty());
}

TEST_CASE("enumerate: cap exceeded suggests the builder") {
  ProgramSpec spec;
  spec.input_range = 2;
  for (int i = 0; i < 5; ++i) {
    spec.variables.push_back(
        VariableSpec::categorical("v" + std::to_string(i), 64));
  }
  spec.output_var = "v0";
  EnumerateOptions opts;
  opts.cap = 1 << 16;
  CHECK_THROWS_AS(enumerate_rules(spec, [](FfnView&) {}, opts),
                  CapExceededError);
}

TEST_CASE("enumerate: restriction filter keeps the step constraint") {
  // A small three-step machine: rules emitted only for assignments in a
  // chosen step carry that step's constraint.
  ProgramSpec spec;
  spec.input_range = 2;
  spec.variables = {VariableSpec::categorical("step", 3),
                    VariableSpec::categorical("v", 4)};
  spec.output_var = "v";
  auto ffn = [](FfnView& z) {
    if (z.eq("step", 2)) {
      z.set("v", (z.cat("v") + 1) % 4);
      z.set("step", 0);
    } else {
      z.set("step", z.cat("step") + 1);
    }
  };
  EnumerateOptions opts;
  opts.filter = [](const Assignment& a, const VarTable& vt) {
    const Value& v = a.values[vt.find("step")];
    return v.kind() == Value::Kind::Cat && v.cat_id() == 2;
  };
  auto rules = enumerate_rules(spec, ffn, opts);
  CHECK(!rules.empty());
  for (const auto& r : rules) {
    bool has_step2 = false;
    for (const auto& c : r.antecedent) {
      if (c.var == "step" && c.value == 2) has_step2 = true;
    }
    CAPTURE(r.output_var);
    CHECK(has_step2);
  }
}

TEST_CASE("enumerate/ffn equivalence on the full assignment space") {
  ProgramSpec spec = parity_sequential_relative();
  auto rules = enumerate_rules(spec, parity_ffn);
  ProgramSpec with_rules = spec;
  with_rules.invalidate_cache();
  with_rules.rules = rules;

  const VarTable& vt = spec.var_table();
  // Walk every assignment (2*2*3*3 = 36) and compare rule application with
  // a direct call of the function.
  for (int p = 0; p < 2; ++p) {
    for (int d = 0; d < 2; ++d) {
      for (int pl = 0; pl < 3; ++pl) {
        for (int dl = 0; dl < 3; ++dl) {
          Assignment a = make_default_assignment(spec);
          a.values[vt.find("parity")] = Value::cat(p);
          a.values[vt.find("done")] = Value::cat(d);
          a.values[vt.find("parity_left")] =
              pl == 2 ? Value::null() : Value::cat(pl);
          a.values[vt.find("done_left")] =
              dl == 2 ? Value::null() : Value::cat(dl);
          Assignment via_rules = apply_rules(with_rules, rules, a);
          Assignment direct = a;
          FfnView view(spec, direct);
          bool skipped = false;
          try {
            parity_ffn(view);
          } catch (const FfnView::SkipAssignment&) {
            skipped = true;
          }
          if (!skipped) {
            Assignment expect = a;
            for (const auto& [var, val] : view.writes()) {
              expect.values[var] = val;
            }
            CHECK(via_rules == expect);
          }
        }
      }
    }
  }
}

TEST_CASE("add_reset_rules: counts and idempotence") {
  ProgramSpec spec = parity_sequential_relative();
  size_t with_resets = spec.rules.size();
  ProgramSpec again = add_reset_rules(spec);
  CHECK(again.rules.size() == with_resets);

  // A program with no heads is unchanged.
  ProgramSpec plain;
  plain.input_range = 2;
  plain.variables = {VariableSpec::categorical("v", 2)};
  plain.output_var = "v";
  ProgramSpec plain2 = add_reset_rules(plain);
  CHECK(plain2.rules.empty());

  // Sum+modulo gets one reset per bucket of the numerical head output.
  ProgramSpec sm = parity_sum_modulo(20);
  int resets = 0;
  for (const auto& r : sm.rules) {
    if (r.is_reset) ++resets;
  }
  CHECK(resets == 21);
}

TEST_CASE("rule exclusivity holds for enumerable bundled programs") {
  std::string witness;
  CHECK(check_rule_exclusivity(parity_sequential_relative(), 1 << 20,
                               &witness));
  CHECK(check_rule_exclusivity(parity_sum_modulo(20), 1 << 22, &witness));
}

TEST_CASE("spec serialization round-trips byte-stably") {
  for (const char* name :
       {"parity_absolute", "parity_relative", "parity_sum_modulo",
        "addition", "subleq"}) {
    CAPTURE(name);
    ProgramSpec spec = make_program(name).spec;
    std::string text = spec_to_string(spec);
    ProgramSpec back = spec_from_string(text);
    CHECK(spec_to_string(back) == text);
    CHECK(validate_program(back).ok());
  }
}

TEST_CASE("nearest bucket: ties break toward the lower bucket") {
  std::vector<double> buckets = {0.0, 1.0, 3.0};
  CHECK(nearest_bucket(buckets, 0.4) == 0);
  CHECK(nearest_bucket(buckets, 0.5) == 0);  // tie
  CHECK(nearest_bucket(buckets, 0.6) == 1);
  CHECK(nearest_bucket(buckets, 2.0) == 1);  // tie with bucket 2
  CHECK(nearest_bucket(buckets, 2.1) == 2);
  CHECK(nearest_bucket(buckets, 100.0) == 2);
}
