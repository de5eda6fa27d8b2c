#pragma once

#include <Eigen/Dense>
#include <map>
#include <set>

#include "loom/compiler.hpp"
#include "loom/interpreter.hpp"

namespace loom {

struct CoverageSpecMismatchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CoverageReport {
  std::set<int> satisfied_rule_ids;
  std::set<int> observed_token_ids;
  std::set<int> observed_positions;
  std::map<int, std::int64_t> rule_counts;
  size_t spec_rule_count = 0;
};

// Rule ids satisfied by one assignment (no error paths; mirrors mlp_step's
// matching including the silent treatment of null and empty values).
std::vector<int> satisfied_rules(const ProgramSpec& spec, const Assignment& a);

CoverageReport collect_coverage(const ProgramSpec& spec,
                                const std::vector<std::vector<int>>& inputs);

// Drops never-satisfied rules and restricts init tables to observed token
// ids and positions (unobserved entries become the variable default).
ProgramSpec minimize(const ProgramSpec& spec, const CoverageReport& coverage);

// MLP supervision pairs: columns are examples; targets equal the encoded
// result of one rule application on the decoded input.
struct MlpDataset {
  Eigen::MatrixXd inputs;   // [d_model x n]
  Eigen::MatrixXd targets;  // [d_model x n]
  double alpha = 0.0;

  Eigen::Index size() const { return inputs.cols(); }
};

struct TraceExport {
  Trace trace;
  MlpDataset dataset;
};

// Runs the interpreter over every input, recording full traces and
// vectorized (mlp_in, mlp_out) pairs. With `dedup`, identical pairs are
// kept once.
TraceExport export_traces(const ProgramSpec& spec,
                          const std::vector<std::vector<int>>& inputs,
                          bool dedup = false);

// Parses the JSON-Lines trace format back into MLP supervision pairs.
MlpDataset dataset_from_trace_jsonl(const ProgramSpec& spec,
                                    const std::string& jsonl,
                                    bool dedup = false);

// The rule layers under study: f(theta, z) = z + W2 * clip01(W1 z + b1).
struct RuleLayerParams {
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;

  static RuleLayerParams from_weights(const ModelWeights& w) {
    return {w.mlp.w1, w.mlp.b1, w.mlp.w2};
  }
};

Eigen::VectorXd rule_layer_forward(const RuleLayerParams& p,
                                   const Eigen::VectorXd& z);

// alpha * (|W1|_1 + |b1|_1 + |W2|_1) + sum_n |f(theta, z_n) - target_n|_1.
double reconstruction_loss(const RuleLayerParams& params,
                           const MlpDataset& dataset, double alpha);

struct ProbeCoordinate {
  enum class Tensor : std::uint8_t { W1, B1, W2 };
  Tensor tensor;
  int row = 0;
  int col = 0;
  double left_delta = 0.0;   // L(theta - eps e) - L(theta)
  double right_delta = 0.0;  // L(theta + eps e) - L(theta)
  bool strict_local_min = false;
};

struct ProbeReport {
  std::vector<ProbeCoordinate> coordinates;
  int strict_count = 0;
  int total() const { return static_cast<int>(coordinates.size()); }
  bool all_strict() const { return strict_count == total(); }
};

// Coordinate-wise +-eps probes of the regularized reconstruction loss
// around the given parameters. Requires 0 < alpha < 1 and 0 < eps < 1.
ProbeReport perturbation_probe(const RuleLayerParams& params,
                               const MlpDataset& dataset, double alpha,
                               double eps);

struct RemovableConstraint {
  int rule_id = 0;
  std::string var;
  int value = 0;
};

// Exhaustive checker: constraints whose removal changes no rule application
// on any assignment of D. Reported, never rewritten.
std::vector<RemovableConstraint> removable_constraints(
    const ProgramSpec& spec, const std::vector<Assignment>& data);

// Unique mlp_in assignments reached when running the inputs (probe data).
std::vector<Assignment> collect_mlp_inputs(
    const ProgramSpec& spec, const std::vector<std::vector<int>>& inputs);

MlpDataset dataset_from_assignments(const ProgramSpec& spec,
                                    const std::vector<Assignment>& mlp_inputs);

std::string coverage_to_json(const CoverageReport& report);
std::string probe_to_json(const ProbeReport& report);

}  // namespace loom
