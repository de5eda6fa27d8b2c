#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <functional>

#include "loom/compiler.hpp"
#include "loom/interpreter.hpp"

namespace loom {

struct NonFiniteActivationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Replacement for the whole MLP sub-layer (residual included): maps the
// pre-MLP activation column to the post-MLP activation column. Used to
// splice trained MLPs into otherwise-compiled weights.
using MlpOverride =
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct ExecOptions {
  std::optional<int> max_layers;
  MlpOverride mlp_override;  // empty => compiled MLP
  bool check_finite = false;
};

struct ExecResult {
  std::vector<int> outputs;      // argmax id per position, lowest ties
  std::vector<int> halt_layers;  // -1 if never halted
  int layers_used = 0;
  bool halted_all = true;
  Eigen::MatrixXd final_activations;  // [d_model x positions]
};

// Shared-weights forward pass. The same tensors apply at every layer;
// halted positions freeze but stay visible to attention.
class Executor {
 public:
  explicit Executor(const ModelWeights& weights);

  ExecResult run(const std::vector<int>& input_ids,
                 const ExecOptions& opts = {}) const;

  const ModelWeights& weights() const { return w_; }
  const VarLayout& layout() const { return layout_; }

 private:
  struct SparseHead {
    Eigen::SparseMatrix<double> wq, wk, wv, wo;
    std::optional<std::set<int>> relative_mask;
  };

  const ModelWeights& w_;
  VarLayout layout_;
  std::vector<SparseHead> heads_;
  Eigen::SparseMatrix<double> l1_, l2_, w1_, w2_;
  int halt_slot_ = -1;
  int halt_value_ = -1;
};

ExecResult run_model(const ModelWeights& weights,
                     const std::vector<int>& input_ids,
                     const ExecOptions& opts = {});

struct EquivalenceRow {
  std::int64_t example_id = 0;
  bool match = false;
  std::vector<int> interpreter_outputs;
  std::vector<int> executor_outputs;
  int interpreter_layers = 0;
  int executor_layers = 0;
  // First sub-layer boundary where decoded activations disagree with the
  // interpreter assignments (layer, position), or (-1,-1).
  int diverge_layer = -1;
  int diverge_position = -1;
  std::string note;
};

struct EquivalenceReport {
  std::vector<EquivalenceRow> rows;
  int matches = 0;
  int total = 0;
  bool all_match() const { return matches == total; }
};

// Runs interpreter and executor on every input and compares output ids.
// With `locate_divergence`, also replays the interpreter trace and reports
// the first decoded-activation mismatch (tolerance 1e-6).
EquivalenceReport check_equivalence(const ProgramSpec& spec,
                                    const ModelWeights& weights,
                                    const std::vector<std::vector<int>>& inputs,
                                    bool locate_divergence = false,
                                    std::optional<int> max_layers = {});

}  // namespace loom
