#pragma once

#include <Eigen/Dense>

#include "loom/analysis.hpp"
#include "loom/executor.hpp"

namespace loom {

struct DivergenceDetectedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  int hidden_layers = 2;
  int hidden_size = 128;
  int batch_size = 256;
  int steps = 10000;
  double learning_rate = 1e-2;
  bool clipped_relu = false;  // standard rectifier otherwise
  bool adam = true;           // plain gradient descent otherwise
  double input_noise_std = 0.1;
  std::uint64_t seed = 0;
  int loss_sample_every = 200;
};

TrainConfig train_config_from_file(const std::string& path);

// Plain feed-forward net trained to reproduce MLP output vectors. The
// forward result replaces the whole MLP sub-layer (residual included).
struct LearnedMlp {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  bool clipped_relu = false;

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
  MlpOverride as_override() const;
};

std::string learned_mlp_to_json(const LearnedMlp& mlp);
LearnedMlp learned_mlp_from_json(const std::string& text);

struct TrainResult {
  LearnedMlp mlp;
  std::vector<std::pair<int, double>> loss_curve;  // (step, batch mse)
  double final_mse = 0.0;  // on the clean dataset
};

// Minimizes mean squared error between mlp(input + noise) and the target.
// Bit-deterministic for a fixed seed and config.
TrainResult train_mlp(const MlpDataset& dataset, const TrainConfig& config);

std::string loss_curve_to_csv(const TrainResult& result);

// Runs compiled weights with the MLP replaced and scores exact-match
// accuracy of the produced output ids against interpreter outputs.
struct SpliceScore {
  int correct = 0;
  int total = 0;
  double accuracy() const {
    return total == 0 ? 0.0 : static_cast<double>(correct) / total;
  }
};

SpliceScore splice_and_eval(const ModelWeights& weights,
                            const MlpOverride& mlp,
                            const std::vector<std::vector<int>>& inputs,
                            const std::vector<std::vector<int>>& expected,
                            std::optional<int> max_layers = {});

}  // namespace loom
