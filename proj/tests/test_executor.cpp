#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "loom/executor.hpp"
#include "loom/programs.hpp"

using namespace loom;
using Eigen::VectorXd;

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

TEST_CASE("run_model: compiled parity fig-3 output") {
  ProgramSpec spec = parity_sequential_absolute(8);
  ModelWeights w = compile(spec);
  ExecResult r = run_model(w, {1, 0, 1});
  CHECK(r.outputs == std::vector<int>{1, 1, 0});
  CHECK(r.layers_used == 2);
  CHECK(r.halted_all);
}

TEST_CASE("attention sharpness: off-selected softmax mass") {
  // With lambda=100 the matched logit is lambda^2; for sequences up to 64
  // the softmax mass off the selected position stays below 1e-10. Computed
  // straight from the compiled projections on the layer-0 activations.
  ProgramSpec spec = parity_sequential_absolute(64);
  ModelWeights w = compile(spec);
  int n = 64;
  Eigen::MatrixXd z(w.d_model, n);
  std::mt19937_64 rng(17);
  for (int i = 0; i < n; ++i) {
    z.col(i) = w.token_embed.row(static_cast<int>(rng() % 2)).transpose() +
               w.pos_embed->row(i).transpose();
  }
  for (const auto& h : w.heads) {
    Eigen::MatrixXd q = h.wq * z;
    Eigen::MatrixXd k = h.wk * z;
    Eigen::MatrixXd logits = q.transpose() * k;
    for (int i = 0; i < n; ++i) {
      // Every position selects exactly one key (its left neighbor).
      double m = w.sink_logit;
      for (int j = 0; j < n; ++j) m = std::max(m, logits(i, j));
      double denom = std::exp(w.sink_logit - m);
      for (int j = 0; j < n; ++j) denom += std::exp(logits(i, j) - m);
      double selected = 0.0;
      int expect = i > 0 ? i - 1 : 0;
      selected = std::exp(logits(i, expect) - m) / denom;
      CHECK(1.0 - selected < 1e-10);
    }
  }
}

TEST_CASE("empty selection decodes to the null pattern") {
  // Position 0 of the relative parity program attends at offset -1 with no
  // position there; its head-output block must stay numerically zero.
  ProgramSpec spec = parity_sequential_relative();
  ModelWeights w = compile(spec);
  VarLayout layout(spec);
  ExecOptions opts;
  opts.max_layers = 1;
  ExecResult r = run_model(w, with_start({1, 1}), opts);
  for (int v = 0; v < 2; ++v) {
    CHECK(std::abs(r.final_activations(layout.slot("parity_left", v), 0)) <
          1e-12);
    CHECK(std::abs(r.final_activations(layout.slot("done_left", v), 0)) <
          1e-12);
  }
}

TEST_CASE("equivalence: parity programs on random strings") {
  std::mt19937_64 rng(11);
  for (const char* name :
       {"parity_absolute", "parity_relative", "parity_sum_modulo"}) {
    CAPTURE(name);
    ProgramBundle b = make_program(name);
    ModelWeights w = compile(b.spec);
    std::vector<std::vector<int>> inputs;
    for (int i = 0; i < 60; ++i) {
      int len = 1 + static_cast<int>(rng() % 20);
      std::vector<int> bits = random_bits(rng, len);
      inputs.push_back(std::string(name) == "parity_absolute"
                           ? bits
                           : with_start(bits));
    }
    EquivalenceReport rep = check_equivalence(b.spec, w, inputs);
    CHECK(rep.matches == rep.total);
    // And both agree with the xor oracle.
    for (size_t i = 0; i < inputs.size(); ++i) {
      std::vector<int> bits = inputs[i];
      if (std::string(name) != "parity_absolute") {
        bits.erase(bits.begin());
      }
      CHECK(rep.rows[i].executor_outputs.back() == xor_fold(bits));
    }
  }
}

TEST_CASE("halting equivalence: per-position halt layers match") {
  ProgramSpec spec = parity_sequential_absolute(16);
  ModelWeights w = compile(spec);
  std::mt19937_64 rng(3);
  Executor exec(w);
  for (int trial = 0; trial < 20; ++trial) {
    int len = 2 + static_cast<int>(rng() % 14);
    std::vector<int> bits = random_bits(rng, len);
    RunResult ir = run(spec, bits);
    ExecResult er = exec.run(bits);
    CHECK(ir.halt_layers == er.halt_layers);
    CHECK(ir.layers_used == er.layers_used);
  }
}

TEST_CASE("activation decodability at sub-layer boundaries") {
  ProgramSpec spec = parity_sequential_relative();
  const VarTable& vt = spec.var_table();
  ModelWeights w = compile(spec);
  VarLayout layout(spec);
  Executor exec(w);
  std::vector<int> input = with_start({1, 0, 1, 1});
  for (int layers = 1; layers <= 4; ++layers) {
    ExecOptions opts;
    opts.max_layers = layers;
    ExecResult r = exec.run(input, opts);
    for (int i = 0; i < static_cast<int>(input.size()); ++i) {
      Assignment a = layout.decode(r.final_activations.col(i), vt);
      for (size_t v = 0; v < vt.entries.size(); ++v) {
        CHECK(!a.values[v].is_ambiguous());
      }
    }
  }
}

TEST_CASE("fault injection: corrupted consequent is localized") {
  ProgramSpec spec = parity_sequential_relative();
  ModelWeights w = compile(spec);
  // Zero one consequent entry of the 0->1 parity-flip rule, then run an
  // input whose trace needs that rule.
  VarLayout layout(spec);
  w.mlp.w2(layout.slot("parity", 1), 0) = 0.0;
  std::vector<std::vector<int>> inputs = {with_start({1, 0})};
  EquivalenceReport rep = check_equivalence(spec, w, inputs, true);
  CHECK(rep.matches == 0);
  CHECK(rep.rows[0].diverge_layer >= 1);
  CHECK(rep.rows[0].note.find("parity") != std::string::npos);
}

TEST_CASE("executor rejects bad tokens and overlong sequences") {
  ProgramSpec spec = parity_sequential_absolute(4);
  ModelWeights w = compile(spec);
  CHECK_THROWS_AS(run_model(w, {0, 5}), TokenOutOfRangeError);
  CHECK_THROWS_AS(run_model(w, {0, 1, 0, 1, 1}), PositionRangeExceededError);
}

TEST_CASE("argmax ties break toward the lowest id") {
  ProgramSpec spec = parity_sequential_absolute(4);
  ModelWeights w = compile(spec);
  // Kill the whole output projection: all scores equal, argmax must be 0.
  w.output_proj.setZero();
  ExecResult r = run_model(w, {1, 1});
  for (int v : r.outputs) CHECK(v == 0);
}

TEST_CASE("mlp override splices an identical compiled MLP") {
  ProgramSpec spec = parity_sequential_relative();
  ModelWeights w = compile(spec);
  MlpWeights mlp = w.mlp;
  ExecOptions opts;
  opts.mlp_override = [mlp](const VectorXd& z) {
    return mlp_forward(mlp, z);
  };
  std::mt19937_64 rng(5);
  Executor exec(w);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<int> input = with_start(random_bits(rng, 8));
    ExecResult plain = exec.run(input);
    ExecResult spliced = exec.run(input, opts);
    CHECK(plain.outputs == spliced.outputs);
    CHECK(plain.layers_used == spliced.layers_used);
  }
}
