#include "loom/executor.hpp"

#include <cmath>

namespace loom {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

Eigen::SparseMatrix<double> sparsify(const MatrixXd& m) {
  Eigen::SparseMatrix<double> s(m.rows(), m.cols());
  std::vector<Eigen::Triplet<double>> trips;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (m(i, j) != 0.0) trips.emplace_back(i, j, m(i, j));
    }
  }
  s.setFromTriplets(trips.begin(), trips.end());
  return s;
}

inline void clip01(MatrixXd& m) {
  m = m.cwiseMax(0.0).cwiseMin(1.0);
}

}  // namespace

Executor::Executor(const ModelWeights& weights)
    : w_(weights), layout_(weights.program) {
  for (const auto& h : w_.heads) {
    heads_.push_back({sparsify(h.wq), sparsify(h.wk), sparsify(h.wv),
                      sparsify(h.wo), h.relative_mask});
  }
  l1_ = sparsify(w_.mlp.l1_w);
  l2_ = sparsify(w_.mlp.l2_w);
  w1_ = sparsify(w_.mlp.w1);
  w2_ = sparsify(w_.mlp.w2);
  if (w_.program.halt) {
    const VarTable& vt = w_.program.var_table();
    halt_slot_ = layout_.slot(vt.find(w_.program.halt->var),
                              w_.program.halt->value);
    halt_value_ = w_.program.halt->value;
  }
}

ExecResult Executor::run(const std::vector<int>& input_ids,
                         const ExecOptions& opts) const {
  ExecResult result;
  int n = static_cast<int>(input_ids.size());
  if (n == 0) return result;
  int d = w_.d_model;

  for (int x : input_ids) {
    if (x < 0 || x >= w_.token_embed.rows()) {
      throw TokenOutOfRangeError("token " + std::to_string(x) +
                                 " outside the embedding table");
    }
  }
  if (w_.pos_embed && n > w_.pos_embed->rows()) {
    throw PositionRangeExceededError("sequence longer than position table");
  }

  MatrixXd z(d, n);
  for (int i = 0; i < n; ++i) {
    z.col(i) = w_.token_embed.row(input_ids[i]).transpose();
    if (w_.pos_embed) z.col(i) += w_.pos_embed->row(i).transpose();
  }

  std::vector<bool> halted(n, false);
  std::vector<int> halt_layer(n, -1);
  auto check_halt = [&](int layer) {
    if (halt_slot_ < 0) return;
    for (int i = 0; i < n; ++i) {
      if (!halted[i] && z(halt_slot_, i) > 0.5) {
        halted[i] = true;
        halt_layer[i] = layer;
      }
    }
  };
  auto all_halted = [&]() {
    if (halt_slot_ < 0) return false;
    for (int i = 0; i < n; ++i) {
      if (!halted[i]) return false;
    }
    return true;
  };

  int max_layers = opts.max_layers.value_or(
      default_max_layers(w_.program, input_ids.size()));
  check_halt(0);
  int layer = 0;
  // Additive relative-position biases, materialized once per run.
  std::vector<MatrixXd> bias;
  for (const auto& h : heads_) {
    MatrixXd b = MatrixXd::Zero(n, n);
    if (h.relative_mask) {
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          if (!h.relative_mask->count(j - i)) b(i, j) = -w_.relative_bias;
        }
      }
    }
    bias.push_back(std::move(b));
  }
  MatrixXd delta(d, n), q, k, v, logits, e, u, hdn, out;
  VectorXd mixed;
  while (!all_halted() && layer < max_layers) {
    layer += 1;
    // Self-attention: per head, logits l(i->j) = (Wq z_i) . (Wk z_j) plus
    // the relative bias at offset j - i; softmax denominators carry the
    // zero-value sink term.
    delta.setZero();
    for (size_t hi = 0; hi < heads_.size(); ++hi) {
      const auto& h = heads_[hi];
      q.noalias() = h.wq * z;  // [d_qk x n]
      k.noalias() = h.wk * z;
      v.noalias() = h.wv * z;  // [d_v x n]
      logits.noalias() = q.transpose() * k;  // (i, j)
      if (h.relative_mask) logits += bias[hi];
      // exp(x) underflows to zero below roughly -745; skipping those terms
      // changes nothing and keeps the softmax loop cheap.
      constexpr double kUnderflow = -745.0;
      for (int i = 0; i < n; ++i) {
        if (halted[i]) continue;
        double m = w_.sink_logit;
        for (int j = 0; j < n; ++j) m = std::max(m, logits(i, j));
        double denom = w_.sink_logit - m < kUnderflow
                           ? 0.0
                           : std::exp(w_.sink_logit - m);
        for (int j = 0; j < n; ++j) {
          double d = logits(i, j) - m;
          if (d >= kUnderflow) denom += std::exp(d);
        }
        mixed = VectorXd::Zero(v.rows());
        for (int j = 0; j < n; ++j) {
          double dd = logits(i, j) - m;
          if (dd < kUnderflow) continue;
          mixed += (std::exp(dd) / denom) * v.col(j);
        }
        delta.col(i) += h.wo * mixed;
      }
    }
    for (int i = 0; i < n; ++i) {
      if (!halted[i]) z.col(i) += delta.col(i);
    }

    // MLP with residual connection.
    if (opts.mlp_override) {
      for (int i = 0; i < n; ++i) {
        if (!halted[i]) z.col(i) = opts.mlp_override(z.col(i));
      }
    } else {
      if (w_.mlp.expansion_identity) {
        e = z;
        clip01(e);
      } else {
        u.noalias() = l1_ * z;
        u.colwise() += w_.mlp.l1_b;
        clip01(u);
        e.noalias() = l2_ * u;
        e.colwise() += w_.mlp.l2_b;
        clip01(e);
      }
      hdn.noalias() = w1_ * e;
      hdn.colwise() += w_.mlp.b1;
      clip01(hdn);
      out.noalias() = w2_ * hdn;
      for (int i = 0; i < n; ++i) {
        if (!halted[i]) z.col(i) += out.col(i);
      }
    }

    if (opts.check_finite && !z.allFinite()) {
      for (int i = 0; i < n; ++i) {
        for (int dd = 0; dd < d; ++dd) {
          if (!std::isfinite(z(dd, i))) {
            throw NonFiniteActivationError(
                "non-finite activation at layer " + std::to_string(layer) +
                ", position " + std::to_string(i) + ", dim " +
                std::to_string(dd));
          }
        }
      }
    }
    check_halt(layer);
  }

  result.layers_used = layer;
  result.halted_all = halt_slot_ < 0 || all_halted();
  result.halt_layers = halt_layer;
  for (int i = 0; i < n; ++i) {
    VectorXd scores = w_.output_proj * z.col(i);
    int best = 0;
    for (int v = 1; v < scores.size(); ++v) {
      if (scores(v) > scores(best)) best = v;  // lowest index wins ties
    }
    result.outputs.push_back(best);
  }
  result.final_activations = std::move(z);
  return result;
}

ExecResult run_model(const ModelWeights& weights,
                     const std::vector<int>& input_ids,
                     const ExecOptions& opts) {
  return Executor(weights).run(input_ids, opts);
}

EquivalenceReport check_equivalence(const ProgramSpec& spec,
                                    const ModelWeights& weights,
                                    const std::vector<std::vector<int>>& inputs,
                                    bool locate_divergence,
                                    std::optional<int> max_layers) {
  EquivalenceReport report;
  Executor exec(weights);
  const VarTable& vt = spec.var_table();
  VarLayout layout(spec);
  for (size_t idx = 0; idx < inputs.size(); ++idx) {
    EquivalenceRow row;
    row.example_id = static_cast<std::int64_t>(idx);
    RunOptions iopts;
    iopts.max_layers = max_layers;
    iopts.record_trace = locate_divergence;
    iopts.example_id = row.example_id;
    RunResult ir;
    bool interp_error = false;
    try {
      ir = ::loom::run(spec, inputs[idx], iopts);
    } catch (const std::exception& e) {
      interp_error = true;
      row.note = std::string("interpreter error: ") + e.what();
    }
    ExecOptions eopts;
    eopts.max_layers = max_layers;
    ExecResult er = exec.run(inputs[idx], eopts);
    row.executor_outputs = er.outputs;
    row.executor_layers = er.layers_used;
    if (!interp_error) {
      row.interpreter_outputs = ir.outputs;
      row.interpreter_layers = ir.layers_used;
      row.match = ir.halted_all && er.halted_all && ir.outputs == er.outputs;
    }
    if (locate_divergence && !interp_error && !row.match) {
      // Re-run the executor layer by layer against the recorded trace.
      // Decoded mismatches are located at MLP-output boundaries.
      ExecOptions probe_opts;
      for (int L = 1; L <= er.layers_used && row.diverge_layer < 0; ++L) {
        probe_opts.max_layers = L;
        ExecResult step = exec.run(inputs[idx], probe_opts);
        for (const auto& rec : ir.trace.records) {
          if (rec.layer != L || rec.stage != TraceStage::MlpOut) continue;
          Assignment decoded = layout.decode(
              step.final_activations.col(rec.position), vt);
          for (size_t v = 0; v < vt.entries.size(); ++v) {
            const Value& want = rec.vars.values[v];
            const Value& got = decoded.values[v];
            bool same;
            if (want.kind() == Value::Kind::Num &&
                got.kind() == Value::Kind::Num) {
              same = std::abs(want.num_value() - got.num_value()) <= 1e-6;
            } else if (want.is_undefined()) {
              same = !got.is_defined() || want.is_ambiguous();
            } else {
              same = want == got;
            }
            if (!same) {
              row.diverge_layer = L;
              row.diverge_position = rec.position;
              row.note = "first divergence on '" + vt.entries[v].name + "'";
              break;
            }
          }
          if (row.diverge_layer >= 0) break;
        }
      }
    }
    report.total += 1;
    if (row.match) report.matches += 1;
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace loom
