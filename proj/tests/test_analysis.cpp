#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "loom/analysis.hpp"
#include "loom/executor.hpp"
#include "loom/programs.hpp"
#include "loom/validate.hpp"

using namespace loom;
using Eigen::VectorXd;

namespace {

int xor_fold(const std::vector<int>& bits) {
  int p = 0;
  for (int b : bits) p ^= (b == 1);
  return p;
}

std::vector<int> with_start(std::vector<int> bits) {
  bits.insert(bits.begin(), kParityStart);
  return bits;
}

std::vector<std::vector<int>> sampled_strings(std::mt19937_64& rng, int count,
                                              int max_len, bool start) {
  std::vector<std::vector<int>> out;
  for (int i = 0; i < count; ++i) {
    int len = 1 + static_cast<int>(rng() % max_len);
    std::vector<int> bits(len);
    for (int& b : bits) b = static_cast<int>(rng() % 2);
    out.push_back(start ? with_start(bits) : bits);
  }
  return out;
}

// Strings covering every ones-count 0..max_ones.
std::vector<std::vector<int>> ones_cover(std::mt19937_64& rng, int max_ones,
                                         int per_count) {
  std::vector<std::vector<int>> out;
  for (int ones = 0; ones <= max_ones; ++ones) {
    for (int rep = 0; rep < per_count; ++rep) {
      int len = ones + static_cast<int>(rng() % (max_ones - ones + 1));
      std::vector<int> bits(len, 0);
      for (int i = 0; i < ones; ++i) bits[i] = 1;
      std::shuffle(bits.begin(), bits.end(), rng);
      out.push_back(with_start(bits));
    }
  }
  return out;
}

std::vector<std::vector<int>> exhaustive_strings(int max_len, bool start) {
  std::vector<std::vector<int>> out;
  for (int len = 1; len <= max_len; ++len) {
    for (int mask = 0; mask < (1 << len); ++mask) {
      std::vector<int> bits(len);
      for (int i = 0; i < len; ++i) bits[i] = (mask >> i) & 1;
      out.push_back(start ? with_start(bits) : bits);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("coverage: relative parity satisfies all 7 rules") {
  ProgramSpec spec = parity_sequential_relative();
  std::mt19937_64 rng(41);
  auto inputs = sampled_strings(rng, 200, 20, true);
  CoverageReport cov = collect_coverage(spec, inputs);
  CHECK(cov.satisfied_rule_ids.size() == 7);
  CHECK(cov.observed_token_ids.count(kParityStart));
}

TEST_CASE("coverage: empty input list") {
  ProgramSpec spec = parity_sequential_relative();
  CoverageReport cov = collect_coverage(spec, {});
  CHECK(cov.satisfied_rule_ids.empty());
  CHECK(cov.observed_token_ids.empty());
}

TEST_CASE("coverage: sum+modulo over <=20 ones satisfies 31 rules") {
  ProgramSpec spec = parity_sum_modulo(40);
  std::mt19937_64 rng(43);
  auto inputs = ones_cover(rng, 20, 3);
  CoverageReport cov = collect_coverage(spec, inputs);
  // 10 odd-count parity flips plus 21 bucket resets.
  CHECK(cov.satisfied_rule_ids.size() == 31);
}

TEST_CASE("minimize: relative parity keeps exactly 7 rules and generalizes") {
  ProgramSpec spec = parity_sequential_relative();
  std::mt19937_64 rng(44);
  auto train = sampled_strings(rng, 300, 20, true);
  ProgramSpec minimal = minimize(spec, collect_coverage(spec, train));
  CHECK(minimal.rules.size() == 7);
  CHECK(validate_program(minimal).ok());

  ModelWeights w = compile(minimal);
  for (int trial = 0; trial < 50; ++trial) {
    int len = 21 + static_cast<int>(rng() % 20);
    std::vector<int> bits(len);
    for (int& b : bits) b = static_cast<int>(rng() % 2);
    ExecResult r = run_model(w, with_start(bits));
    CHECK(r.outputs.back() == xor_fold(bits));
  }
}

TEST_CASE("minimize: absolute parity fails beyond the trained positions") {
  ProgramSpec spec = parity_sequential_absolute(40);
  std::mt19937_64 rng(45);
  auto train = sampled_strings(rng, 300, 20, false);
  ProgramSpec minimal = minimize(spec, collect_coverage(spec, train));
  ModelWeights w = compile(minimal);

  // Catches the length-30 wrong-output example: some length-30 input must
  // disagree with the oracle.
  bool any_wrong = false;
  for (int trial = 0; trial < 30 && !any_wrong; ++trial) {
    std::vector<int> bits(30);
    for (int& b : bits) b = static_cast<int>(rng() % 2);
    ExecOptions opts;
    opts.max_layers = 40;
    ExecResult r = run_model(w, bits, opts);
    if (r.outputs.back() != xor_fold(bits)) any_wrong = true;
  }
  CHECK(any_wrong);

  // Still perfect within the trained length range.
  for (int trial = 0; trial < 30; ++trial) {
    int len = 1 + static_cast<int>(rng() % 20);
    std::vector<int> bits(len);
    for (int& b : bits) b = static_cast<int>(rng() % 2);
    ExecResult r = run_model(w, bits);
    CHECK(r.outputs.back() == xor_fold(bits));
  }
}

TEST_CASE("minimize: sum+modulo generalizes by ones, not by length") {
  ProgramSpec spec = parity_sum_modulo(40);
  std::mt19937_64 rng(46);
  auto train = ones_cover(rng, 20, 3);  // lengths up to 20
  ProgramSpec minimal = minimize(spec, collect_coverage(spec, train));
  ModelWeights w = compile(minimal);

  // Length 30 with 10 ones: correct.
  {
    std::vector<int> bits(30, 0);
    for (int i = 0; i < 10; ++i) bits[i] = 1;
    std::shuffle(bits.begin(), bits.end(), rng);
    ExecResult r = run_model(w, with_start(bits));
    CHECK(r.outputs.back() == 0);
  }
  // Length 30 with 25 ones: incorrect (no transition rule for that count).
  {
    std::vector<int> bits(30, 0);
    for (int i = 0; i < 25; ++i) bits[i] = 1;
    std::shuffle(bits.begin(), bits.end(), rng);
    ExecResult r = run_model(w, with_start(bits));
    CHECK(r.outputs.back() != xor_fold(bits));
  }
}

TEST_CASE("minimize: coverage from a different spec is rejected") {
  ProgramSpec spec = parity_sequential_relative();
  CoverageReport cov = collect_coverage(spec, {with_start({1})});
  ProgramSpec other = parity_sum_modulo(10);
  CHECK_THROWS_AS(minimize(other, cov), CoverageSpecMismatchError);
}

TEST_CASE("minimization soundness: identical outputs on the dataset") {
  ProgramSpec spec = parity_sequential_relative();
  std::mt19937_64 rng(47);
  auto train = sampled_strings(rng, 100, 12, true);
  ProgramSpec minimal = minimize(spec, collect_coverage(spec, train));
  for (const auto& input : train) {
    CHECK(run(spec, input).outputs == run(minimal, input).outputs);
  }
}

TEST_CASE("export_traces: parity pairs and replay oracle") {
  ProgramSpec spec = parity_sequential_absolute(8);
  TraceExport ex = export_traces(spec, {{1, 0, 1}});
  // 3 positions x 2 layers of mlp pairs.
  CHECK(ex.dataset.size() == 6);
  const VarTable& vt = spec.var_table();
  VarLayout layout(spec);
  // The (layer 1, position 1) pair has done=0, done_left=1 at the input.
  bool found = false;
  for (const auto& rec : ex.trace.records) {
    if (rec.layer == 1 && rec.position == 1 &&
        rec.stage == TraceStage::MlpIn) {
      CHECK(rec.vars.values[vt.find("done")] == Value::cat(0));
      CHECK(rec.vars.values[vt.find("done_left")] == Value::cat(1));
      found = true;
    }
  }
  CHECK(found);

  // Every pair satisfies target = encode(step(decode(input))).
  for (Eigen::Index n = 0; n < ex.dataset.size(); ++n) {
    Assignment in = layout.decode(ex.dataset.inputs.col(n), vt);
    VectorXd replay = layout.encode(apply_rules(spec, spec.rules, in), vt);
    CHECK((replay - ex.dataset.targets.col(n)).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("export_traces: dedup keeps unique pairs only") {
  ProgramSpec spec = parity_sequential_relative();
  auto all = export_traces(spec, {with_start({1, 1, 1, 1})}, false);
  auto dedup = export_traces(spec, {with_start({1, 1, 1, 1})}, true);
  CHECK(dedup.dataset.size() < all.dataset.size());
}

TEST_CASE("reconstruction loss: zero at the compiled point, alpha scales") {
  ProgramSpec spec = parity_sequential_relative();
  ModelWeights w = compile(spec);
  RuleLayerParams params = RuleLayerParams::from_weights(w);
  std::mt19937_64 rng(48);
  auto data = dataset_from_assignments(
      spec, collect_mlp_inputs(spec, sampled_strings(rng, 50, 12, true)));

  CHECK(reconstruction_loss(params, data, 0.0) == 0.0);
  // Published parity matrices: |W1|_1 = 14, |b1|_1 = 7, |W2|_1 = 10.
  CHECK(params.w1.cwiseAbs().sum() == 14.0);
  CHECK(params.b1.cwiseAbs().sum() == 7.0);
  CHECK(params.w2.cwiseAbs().sum() == 10.0);
  CHECK(reconstruction_loss(params, data, 0.5) == doctest::Approx(15.5));

  // Breaking a consequent on a dataset that activates it costs loss.
  RuleLayerParams broken = params;
  broken.w2.row(0).setZero();
  broken.w2.row(1).setZero();
  CHECK(reconstruction_loss(broken, data, 0.0) > 0.0);

  RuleLayerParams bad_shape = params;
  bad_shape.b1 = VectorXd::Zero(3);
  CHECK_THROWS_AS(reconstruction_loss(bad_shape, data, 0.0),
                  std::invalid_argument);
}

TEST_CASE("probe: minimal parity is a strict coordinate-wise optimum") {
  ProgramSpec spec = parity_sequential_relative();
  ModelWeights w = compile(spec);
  auto data = dataset_from_assignments(
      spec, collect_mlp_inputs(spec, exhaustive_strings(12, true)));
  for (double alpha : {0.1, 0.5, 0.9}) {
    for (double eps : {0.01, 0.1}) {
      CAPTURE(alpha);
      CAPTURE(eps);
      ProbeReport rep = perturbation_probe(RuleLayerParams::from_weights(w),
                                           data, alpha, eps);
      CHECK(rep.all_strict());
    }
  }
}

TEST_CASE("probe: an injected dead rule is not a strict optimum") {
  ProgramSpec spec = parity_sequential_relative();
  ProgramSpec dead = spec;
  dead.invalidate_cache();
  // done=1 with done_left=0 never occurs: the left neighbor always updates
  // first.
  TransitionRule r;
  r.antecedent = {{"done", 1}, {"done_left", 0}, {"parity", 0}};
  r.output_var = "parity";
  r.old_value = 0;
  r.new_value = 1;
  dead.rules.insert(dead.rules.begin() + 3, r);
  ModelWeights w = compile(dead);
  auto data = dataset_from_assignments(
      dead, collect_mlp_inputs(dead, exhaustive_strings(12, true)));
  ProbeReport rep = perturbation_probe(RuleLayerParams::from_weights(w), data,
                                       0.5, 0.01);
  CHECK(!rep.all_strict());
  CHECK(rep.strict_count < rep.total());
}

TEST_CASE("probe: deltas are symmetric by construction under sign flip") {
  // left_delta at +eps equals right_delta at -eps by definition; verified
  // via a coordinate with a symmetric loss.
  ProgramSpec spec = parity_sequential_relative();
  ModelWeights w = compile(spec);
  auto data = dataset_from_assignments(
      spec, collect_mlp_inputs(spec, exhaustive_strings(6, true)));
  ProbeReport a = perturbation_probe(RuleLayerParams::from_weights(w), data,
                                     0.5, 0.01);
  for (const auto& c : a.coordinates) {
    CHECK(std::isfinite(c.left_delta));
    CHECK(std::isfinite(c.right_delta));
  }
}

TEST_CASE("probe: dead antecedent constraint flips a coordinate") {
  // Rule {A=1, B=0, C=1} => B:=1 where C always equals A on the data: the
  // C=1 constraint is removable, and no assignment in D satisfies exactly
  // N-1 constraints, so the rule's bias coordinate loses strictness.
  ProgramSpec spec;
  spec.input_range = 2;
  spec.variables = {VariableSpec::categorical("A", 2),
                    VariableSpec::categorical("B", 2),
                    VariableSpec::categorical("C", 2)};
  spec.output_var = "B";
  TransitionRule r;
  r.antecedent = {{"A", 1}, {"B", 0}, {"C", 1}};
  r.output_var = "B";
  r.old_value = 0;
  r.new_value = 1;
  spec.rules = {r};
  require_valid(spec);

  const VarTable& vt = spec.var_table();
  auto mk = [&](int a, int b, int c) {
    Assignment x = make_default_assignment(spec);
    x.values[vt.find("A")] = Value::cat(a);
    x.values[vt.find("B")] = Value::cat(b);
    x.values[vt.find("C")] = Value::cat(c);
    return x;
  };
  std::vector<Assignment> d = {mk(1, 0, 1), mk(0, 0, 0), mk(0, 1, 0)};

  // The checker reports the constraint as removable.
  auto removable = removable_constraints(spec, d);
  REQUIRE(removable.size() >= 1);
  bool found = false;
  for (const auto& rc : removable) {
    if (rc.var == "C" && rc.value == 1) found = true;
  }
  CHECK(found);

  ModelWeights w = compile(spec);
  ProbeReport rep = perturbation_probe(RuleLayerParams::from_weights(w),
                                       dataset_from_assignments(spec, d), 0.5,
                                       0.01);
  CHECK(!rep.all_strict());
}

TEST_CASE("dataset jsonl round trip") {
  ProgramSpec spec = parity_sequential_relative();
  RunOptions opts;
  opts.record_trace = true;
  RunResult r = run(spec, with_start({1, 0, 1}), opts);
  std::string jsonl = trace_to_jsonl(r.trace, spec);
  MlpDataset ds = dataset_from_trace_jsonl(spec, jsonl, false);
  TraceExport direct = export_traces(spec, {with_start({1, 0, 1})}, false);
  REQUIRE(ds.size() == direct.dataset.size());
  CHECK((ds.inputs - direct.dataset.inputs).cwiseAbs().maxCoeff() == 0.0);
  CHECK((ds.targets - direct.dataset.targets).cwiseAbs().maxCoeff() == 0.0);
}
