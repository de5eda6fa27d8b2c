#include "loom/training.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

namespace loom {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Hand-rolled Box-Muller keeps the noise stream identical across standard
// library implementations.
class Gaussian {
 public:
  explicit Gaussian(std::uint64_t seed) : rng_(seed) {}

  double operator()() {
    if (have_) {
      have_ = false;
      return spare_;
    }
    double u1 = next_uniform();
    double u2 = next_uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    have_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

  std::uint64_t next_index(std::uint64_t n) { return rng_() % n; }

 private:
  double next_uniform() {
    // (0, 1]
    return (static_cast<double>(rng_() >> 11) + 1.0) / 9007199254740993.0;
  }

  std::mt19937_64 rng_;
  bool have_ = false;
  double spare_ = 0.0;
};

}  // namespace

TrainConfig train_config_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();

  TrainConfig cfg;
  auto apply = [&](const std::string& key, const nlohmann::json& v) {
    if (key == "hidden_layers") cfg.hidden_layers = v.get<int>();
    else if (key == "hidden_size") cfg.hidden_size = v.get<int>();
    else if (key == "batch_size") cfg.batch_size = v.get<int>();
    else if (key == "steps") cfg.steps = v.get<int>();
    else if (key == "learning_rate") cfg.learning_rate = v.get<double>();
    else if (key == "clipped_relu") cfg.clipped_relu = v.get<bool>();
    else if (key == "adam") cfg.adam = v.get<bool>();
    else if (key == "input_noise_std") cfg.input_noise_std = v.get<double>();
    else if (key == "seed") cfg.seed = v.get<std::uint64_t>();
    else if (key == "loss_sample_every") cfg.loss_sample_every = v.get<int>();
    else throw std::runtime_error("unknown train config key: " + key);
  };

  if (path.size() >= 5 && path.substr(path.size() - 5) == ".toml") {
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
      auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      auto trim = [](std::string s) {
        size_t a = s.find_first_not_of(" \t\r");
        size_t b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
      };
      std::string key = trim(line.substr(0, eq));
      std::string val = trim(line.substr(eq + 1));
      if (key.empty()) continue;
      apply(key, nlohmann::json::parse(val));
    }
  } else {
    nlohmann::json j = nlohmann::json::parse(text);
    for (auto& [key, v] : j.items()) apply(key, v);
  }
  if (cfg.hidden_layers < 1 || cfg.hidden_size < 1 || cfg.batch_size < 1 ||
      cfg.steps < 1 || cfg.learning_rate <= 0.0) {
    throw std::runtime_error("train config values must be positive");
  }
  return cfg;
}

VectorXd LearnedMlp::forward(const VectorXd& x) const {
  VectorXd h = x;
  for (size_t l = 0; l < weights.size(); ++l) {
    h = weights[l] * h + biases[l];
    if (l + 1 < weights.size()) {
      h = clipped_relu ? h.cwiseMax(0.0).cwiseMin(1.0).eval()
                       : h.cwiseMax(0.0).eval();
    }
  }
  return h;
}

MlpOverride LearnedMlp::as_override() const {
  LearnedMlp copy = *this;
  return [copy](const VectorXd& z) { return copy.forward(z); };
}

std::string learned_mlp_to_json(const LearnedMlp& mlp) {
  nlohmann::json j;
  j["clipped_relu"] = mlp.clipped_relu;
  nlohmann::json layers = nlohmann::json::array();
  for (size_t l = 0; l < mlp.weights.size(); ++l) {
    nlohmann::json jl;
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < mlp.weights[l].rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index c = 0; c < mlp.weights[l].cols(); ++c) {
        row.push_back(mlp.weights[l](i, c));
      }
      rows.push_back(std::move(row));
    }
    jl["w"] = std::move(rows);
    nlohmann::json bias = nlohmann::json::array();
    for (Eigen::Index i = 0; i < mlp.biases[l].size(); ++i) {
      bias.push_back(mlp.biases[l](i));
    }
    jl["b"] = std::move(bias);
    layers.push_back(std::move(jl));
  }
  j["layers"] = std::move(layers);
  return j.dump();
}

LearnedMlp learned_mlp_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  LearnedMlp mlp;
  mlp.clipped_relu = j.at("clipped_relu").get<bool>();
  for (const auto& jl : j.at("layers")) {
    const auto& rows = jl.at("w");
    MatrixXd w(rows.size(), rows[0].size());
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        w(i, c) = rows[i][c].get<double>();
      }
    }
    const auto& jb = jl.at("b");
    VectorXd b(jb.size());
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = jb[i].get<double>();
    mlp.weights.push_back(std::move(w));
    mlp.biases.push_back(std::move(b));
  }
  return mlp;
}

TrainResult train_mlp(const MlpDataset& dataset, const TrainConfig& config) {
  if (dataset.size() == 0) {
    throw std::invalid_argument("train_mlp: empty dataset");
  }
  int d = static_cast<int>(dataset.inputs.rows());
  Gaussian rng(config.seed ^ 0x9e3779b97f4a7c15ull);

  LearnedMlp mlp;
  mlp.clipped_relu = config.clipped_relu;
  std::vector<int> sizes;
  sizes.push_back(d);
  for (int l = 0; l < config.hidden_layers; ++l) {
    sizes.push_back(config.hidden_size);
  }
  sizes.push_back(d);
  for (size_t l = 0; l + 1 < sizes.size(); ++l) {
    MatrixXd w(sizes[l + 1], sizes[l]);
    double scale = std::sqrt(2.0 / sizes[l]);
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(i, c) = scale * rng();
    }
    mlp.weights.push_back(std::move(w));
    mlp.biases.push_back(VectorXd::Zero(sizes[l + 1]));
  }

  size_t n_layers = mlp.weights.size();
  std::vector<MatrixXd> m_w(n_layers), v_w(n_layers);
  std::vector<VectorXd> m_b(n_layers), v_b(n_layers);
  for (size_t l = 0; l < n_layers; ++l) {
    m_w[l] = MatrixXd::Zero(mlp.weights[l].rows(), mlp.weights[l].cols());
    v_w[l] = m_w[l];
    m_b[l] = VectorXd::Zero(mlp.biases[l].size());
    v_b[l] = m_b[l];
  }
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;

  TrainResult result;
  Eigen::Index n = dataset.size();
  int batch = std::min<int>(config.batch_size, static_cast<int>(n));

  for (int step = 1; step <= config.steps; ++step) {
    MatrixXd x(d, batch);
    MatrixXd y(d, batch);
    for (int b = 0; b < batch; ++b) {
      Eigen::Index pick = static_cast<Eigen::Index>(
          rng.next_index(static_cast<std::uint64_t>(n)));
      x.col(b) = dataset.inputs.col(pick);
      y.col(b) = dataset.targets.col(pick);
      if (config.input_noise_std > 0.0) {
        for (int i = 0; i < d; ++i) {
          x(i, b) += config.input_noise_std * rng();
        }
      }
    }

    // Forward.
    std::vector<MatrixXd> acts;  // post-activation inputs to each layer
    std::vector<MatrixXd> pre;   // pre-activation outputs
    acts.push_back(x);
    for (size_t l = 0; l < n_layers; ++l) {
      MatrixXd z = (mlp.weights[l] * acts.back()).colwise() + mlp.biases[l];
      pre.push_back(z);
      if (l + 1 < n_layers) {
        MatrixXd a = config.clipped_relu
                         ? z.cwiseMax(0.0).cwiseMin(1.0).eval()
                         : z.cwiseMax(0.0).eval();
        acts.push_back(std::move(a));
      }
    }
    MatrixXd diff = pre.back() - y;
    double mse = diff.squaredNorm() / static_cast<double>(diff.size());
    if (!std::isfinite(mse)) {
      throw DivergenceDetectedError("training loss became non-finite at step " +
                                    std::to_string(step));
    }
    if (step % config.loss_sample_every == 0 || step == 1 ||
        step == config.steps) {
      result.loss_curve.push_back({step, mse});
    }

    // Backward: d(mse)/d(pre.back) = 2 diff / count.
    MatrixXd grad = diff * (2.0 / static_cast<double>(diff.size()));
    for (size_t li = n_layers; li-- > 0;) {
      MatrixXd gw = grad * acts[li].transpose();
      VectorXd gb = grad.rowwise().sum();
      if (li > 0) {
        MatrixXd upstream = mlp.weights[li].transpose() * grad;
        const MatrixXd& z = pre[li - 1];
        for (Eigen::Index i = 0; i < upstream.rows(); ++i) {
          for (Eigen::Index c = 0; c < upstream.cols(); ++c) {
            double zv = z(i, c);
            bool pass = config.clipped_relu ? (zv > 0.0 && zv < 1.0)
                                            : (zv > 0.0);
            if (!pass) upstream(i, c) = 0.0;
          }
        }
        grad = std::move(upstream);
      }
      if (config.adam) {
        double bc1 = 1.0 - std::pow(kBeta1, step);
        double bc2 = 1.0 - std::pow(kBeta2, step);
        m_w[li] = kBeta1 * m_w[li] + (1.0 - kBeta1) * gw;
        v_w[li] = kBeta2 * v_w[li] + (1.0 - kBeta2) * gw.cwiseProduct(gw);
        mlp.weights[li] -=
            (config.learning_rate * (m_w[li] / bc1).array() /
             ((v_w[li] / bc2).array().sqrt() + kEps))
                .matrix();
        m_b[li] = kBeta1 * m_b[li] + (1.0 - kBeta1) * gb;
        v_b[li] = kBeta2 * v_b[li] + (1.0 - kBeta2) * gb.cwiseProduct(gb);
        mlp.biases[li] -=
            (config.learning_rate * (m_b[li] / bc1).array() /
             ((v_b[li] / bc2).array().sqrt() + kEps))
                .matrix();
      } else {
        mlp.weights[li] -= config.learning_rate * gw;
        mlp.biases[li] -= config.learning_rate * gb;
      }
    }
  }

  // Final clean-dataset error.
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    VectorXd out = mlp.forward(dataset.inputs.col(i));
    total += (out - dataset.targets.col(i)).squaredNorm();
  }
  result.final_mse = total / static_cast<double>(n * d);
  result.mlp = std::move(mlp);
  return result;
}

std::string loss_curve_to_csv(const TrainResult& result) {
  std::ostringstream os;
  os << "step,mse\n";
  for (const auto& [step, mse] : result.loss_curve) {
    os << step << "," << mse << "\n";
  }
  return os.str();
}

SpliceScore splice_and_eval(const ModelWeights& weights,
                            const MlpOverride& mlp,
                            const std::vector<std::vector<int>>& inputs,
                            const std::vector<std::vector<int>>& expected,
                            std::optional<int> max_layers) {
  if (inputs.size() != expected.size()) {
    throw std::invalid_argument("splice_and_eval: size mismatch");
  }
  Executor exec(weights);
  SpliceScore score;
  for (size_t i = 0; i < inputs.size(); ++i) {
    ExecOptions opts;
    opts.mlp_override = mlp;
    opts.max_layers = max_layers;
    ExecResult r = exec.run(inputs[i], opts);
    score.total += 1;
    if (r.outputs == expected[i] && r.halted_all) score.correct += 1;
  }
  return score;
}

}  // namespace loom
