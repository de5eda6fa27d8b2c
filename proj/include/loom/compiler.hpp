#pragma once

#include <Eigen/Dense>
#include <optional>

#include "loom/layout.hpp"
#include "loom/program.hpp"

namespace loom {

struct CompileOptions {
  double sharpness = 100.0;          // lambda
  double expansion_gain = 1e6;       // step steepness for bucket indicators
  double relative_bias = 1e4;        // magnitude B of masked-offset biases
};

struct HeadWeights {
  Eigen::MatrixXd wq;  // [d_qk x d_model]
  Eigen::MatrixXd wk;  // [d_qk x d_model]
  Eigen::MatrixXd wv;  // [d_v x d_model]
  Eigen::MatrixXd wo;  // [d_model x d_v]
  std::optional<std::set<int>> relative_mask;
};

// Four MLP layers. The first two convert numerical and set variables into
// one-hot indicators (exact identities for purely categorical programs);
// the last two hold the rule antecedents and consequents.
struct MlpWeights {
  bool expansion_identity = false;
  Eigen::MatrixXd l1_w;
  Eigen::VectorXd l1_b;
  Eigen::MatrixXd l2_w;
  Eigen::VectorXd l2_b;
  Eigen::MatrixXd w1;  // [rules x expanded]
  Eigen::VectorXd b1;  // 1 - N_rule
  Eigen::MatrixXd w2;  // [d_model x rules]; second bias is fixed to zero

  int rule_width() const { return static_cast<int>(w1.rows()); }
};

struct ModelWeights {
  static constexpr int kFormatVersion = 1;

  Eigen::MatrixXd token_embed;               // [input_range x d_model]
  std::optional<Eigen::MatrixXd> pos_embed;  // [position_range x d_model]
  std::vector<HeadWeights> heads;
  MlpWeights mlp;
  Eigen::MatrixXd output_proj;  // [output_range x d_model]

  double sharpness = 100.0;
  double expansion_gain = 1e6;
  double relative_bias = 1e4;
  // Virtual zero-value sink occupying e^{sink_logit} of every softmax
  // denominator. Sits between the matched logit (sharpness^2) and the
  // unmatched logit (0) so empty selections decode to the all-zeros null
  // pattern instead of a uniform average.
  double sink_logit = 0.0;

  ProgramSpec program;  // layout metadata, halt spec, output variable
  int d_model = 0;

  int rule_width() const { return mlp.rule_width(); }
};

struct CompileError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Index space of the expanded (post-L2) representation: one dimension per
// discrete state of every variable.
class ExpandedLayout {
 public:
  explicit ExpandedLayout(const ProgramSpec& spec);
  int width() const { return width_; }
  // Dimension of (var, discrete id): categorical value, bucket index, or
  // allowed-set index.
  int slot(int var, int id) const { return offsets_[var] + id; }
  int var_offset(int var) const { return offsets_[var]; }

 private:
  int width_ = 0;
  std::vector<int> offsets_;
};

std::pair<Eigen::MatrixXd, std::optional<Eigen::MatrixXd>> compile_embeddings(
    const ProgramSpec& spec, const VarLayout& layout);

// One MLP sub-layer (all four layers plus the residual connection).
Eigen::VectorXd mlp_forward(const MlpWeights& mlp, const Eigen::VectorXd& z);
// Hidden rule activations sigma(W1 e + b1) for the expanded input.
Eigen::VectorXd mlp_rule_activations(const MlpWeights& mlp,
                                     const Eigen::VectorXd& z);

HeadWeights compile_head(const ProgramSpec& spec,
                         const AttentionHeadSpec& head,
                         const VarLayout& layout, double sharpness);

MlpWeights compile_mlp(const ProgramSpec& spec, const VarLayout& layout,
                       double expansion_gain);

ModelWeights compile(const ProgramSpec& spec, const CompileOptions& opts = {});

// Deterministic JSON round-trip (row-major nested arrays of doubles).
std::string serialize_weights(const ModelWeights& w);
ModelWeights deserialize_weights(const std::string& bytes);

bool weights_equal(const ModelWeights& a, const ModelWeights& b);

}  // namespace loom
