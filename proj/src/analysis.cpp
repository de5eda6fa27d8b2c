#include "loom/analysis.hpp"

#include <json.hpp>

#include "loom/json_io.hpp"
#include "loom/validate.hpp"

namespace loom {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::vector<int> satisfied_rules(const ProgramSpec& spec,
                                 const Assignment& a) {
  const VarTable& vt = spec.var_table();
  std::vector<int> out;
  for (size_t ri = 0; ri < spec.rules.size(); ++ri) {
    const TransitionRule& r = spec.rules[ri];
    bool sat = true;
    for (const auto& c : r.antecedent) {
      int v = vt.find(c.var);
      const Value& val = a.values[v];
      if (!val.is_defined() || vt.discrete_from_value(v, val) != c.value) {
        sat = false;
        break;
      }
    }
    if (sat) out.push_back(static_cast<int>(ri));
  }
  return out;
}

namespace {

// Shared traversal: runs each input and hands every position's mlp_in
// assignment to the sink, with the layer's live-rule set for cheap
// satisfaction scans.
template <typename Fn>
void for_each_mlp_in(const ProgramSpec& spec,
                     const std::vector<std::vector<int>>& inputs, Fn&& fn) {
  for (size_t idx = 0; idx < inputs.size(); ++idx) {
    RunOptions opts;
    opts.example_id = static_cast<std::int64_t>(idx);
    opts.mlp_in_hook = [&](int layer, const ResidualState& state) {
      std::vector<int> live = live_rules(spec, state);
      for (size_t i = 0; i < state.size(); ++i) {
        if (state.halted[i]) continue;
        fn(idx, layer, static_cast<int>(i), state.positions[i], live);
      }
    };
    try {
      run(spec, inputs[idx], opts);
    } catch (const std::exception& e) {
      throw std::runtime_error("input #" + std::to_string(idx) +
                               " failed: " + e.what());
    }
  }
}

}  // namespace

CoverageReport collect_coverage(const ProgramSpec& spec,
                                const std::vector<std::vector<int>>& inputs) {
  const VarTable& vt = spec.var_table();
  const auto& prepared = spec.prepared_rules();
  CoverageReport report;
  report.spec_rule_count = spec.rules.size();
  for (const auto& input : inputs) {
    for (int x : input) report.observed_token_ids.insert(x);
    for (size_t i = 0; i < input.size(); ++i) {
      report.observed_positions.insert(static_cast<int>(i));
    }
  }
  for_each_mlp_in(
      spec, inputs,
      [&](size_t, int, int, const Assignment& a, const std::vector<int>& live) {
        for (int ri : live) {
          bool sat = true;
          for (const auto& [v, id] : prepared[ri].constraints) {
            if (constraint_state(vt.entries[v], a.values[v], id) !=
                MatchState::Match) {
              sat = false;
              break;
            }
          }
          if (sat) {
            report.satisfied_rule_ids.insert(ri);
            report.rule_counts[ri] += 1;
          }
        }
      });
  return report;
}

ProgramSpec minimize(const ProgramSpec& spec, const CoverageReport& coverage) {
  if (coverage.spec_rule_count != spec.rules.size()) {
    throw CoverageSpecMismatchError(
        "coverage was computed for a different rule list");
  }
  ProgramSpec out = spec;
  out.invalidate_cache();
  std::vector<TransitionRule> rules;
  for (size_t ri = 0; ri < spec.rules.size(); ++ri) {
    if (coverage.satisfied_rule_ids.count(static_cast<int>(ri))) {
      rules.push_back(spec.rules[ri]);
    }
  }
  out.rules = std::move(rules);
  for (auto& v : out.variables) {
    if (v.init.kind == VarInit::Kind::Input) {
      for (size_t x = 0; x < v.init.table.size(); ++x) {
        if (!coverage.observed_token_ids.count(static_cast<int>(x))) {
          v.init.table[x] = v.default_value;
        }
      }
    } else if (v.init.kind == VarInit::Kind::Position) {
      for (size_t i = 0; i < v.init.table.size(); ++i) {
        if (!coverage.observed_positions.count(static_cast<int>(i))) {
          v.init.table[i] = v.default_value;
        }
      }
    }
  }
  return out;
}

TraceExport export_traces(const ProgramSpec& spec,
                          const std::vector<std::vector<int>>& inputs,
                          bool dedup) {
  VarLayout layout(spec);
  const VarTable& vt = spec.var_table();
  TraceExport out;
  std::vector<VectorXd> in_cols;
  std::vector<VectorXd> tgt_cols;
  std::set<std::pair<std::vector<double>, std::vector<double>>> seen;

  for (size_t idx = 0; idx < inputs.size(); ++idx) {
    RunOptions opts;
    opts.record_trace = true;
    opts.example_id = static_cast<std::int64_t>(idx);
    RunResult r = run(spec, inputs[idx], opts);
    // Pair each mlp_in with the matching mlp_out of the same layer/position.
    std::map<std::pair<int, int>, const TraceRecord*> mlp_in;
    for (const auto& rec : r.trace.records) {
      if (rec.stage == TraceStage::MlpIn) {
        mlp_in[{rec.layer, rec.position}] = &rec;
      } else if (rec.stage == TraceStage::MlpOut) {
        const TraceRecord* in = mlp_in.at({rec.layer, rec.position});
        VectorXd zi = layout.encode(in->vars, vt);
        VectorXd zo = layout.encode(rec.vars, vt);
        if (dedup) {
          std::vector<double> ki(zi.data(), zi.data() + zi.size());
          std::vector<double> ko(zo.data(), zo.data() + zo.size());
          if (!seen.insert({std::move(ki), std::move(ko)}).second) continue;
        }
        in_cols.push_back(std::move(zi));
        tgt_cols.push_back(std::move(zo));
      }
    }
    for (auto& rec : r.trace.records) {
      out.trace.records.push_back(std::move(rec));
    }
  }
  out.dataset.inputs = MatrixXd(layout.d_model(), in_cols.size());
  out.dataset.targets = MatrixXd(layout.d_model(), tgt_cols.size());
  for (size_t i = 0; i < in_cols.size(); ++i) {
    out.dataset.inputs.col(static_cast<Eigen::Index>(i)) = in_cols[i];
    out.dataset.targets.col(static_cast<Eigen::Index>(i)) = tgt_cols[i];
  }
  return out;
}

MlpDataset dataset_from_trace_jsonl(const ProgramSpec& spec,
                                    const std::string& jsonl, bool dedup) {
  VarLayout layout(spec);
  const VarTable& vt = spec.var_table();
  std::map<std::tuple<std::int64_t, int, int>, Assignment> ins;
  std::vector<VectorXd> in_cols;
  std::vector<VectorXd> tgt_cols;
  std::set<std::pair<std::vector<double>, std::vector<double>>> seen;

  size_t pos = 0;
  while (pos < jsonl.size()) {
    size_t eol = jsonl.find('\n', pos);
    if (eol == std::string::npos) eol = jsonl.size();
    std::string line = jsonl.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    Assignment a = make_default_assignment(spec);
    for (auto& [name, jv] : j.at("vars").items()) {
      int v = vt.find(name);
      if (v < 0) throw SerializationError("trace names unknown var " + name);
      if (jv.is_string()) {
        a.values[v] = Value::undefined_empty();
      } else {
        a.values[v] = value_from_json(jv, vt.entries[v].kind);
      }
    }
    std::tuple<std::int64_t, int, int> key{
        j.at("example_id").get<std::int64_t>(), j.at("layer").get<int>(),
        j.at("position").get<int>()};
    std::string stage = j.at("stage").get<std::string>();
    if (stage == "mlp_in") {
      ins[key] = std::move(a);
    } else if (stage == "mlp_out") {
      auto it = ins.find(key);
      if (it == ins.end()) {
        throw SerializationError("mlp_out without matching mlp_in in trace");
      }
      VectorXd zi = layout.encode(it->second, vt);
      VectorXd zo = layout.encode(a, vt);
      if (dedup) {
        std::vector<double> ki(zi.data(), zi.data() + zi.size());
        std::vector<double> ko(zo.data(), zo.data() + zo.size());
        if (!seen.insert({std::move(ki), std::move(ko)}).second) continue;
      }
      in_cols.push_back(std::move(zi));
      tgt_cols.push_back(std::move(zo));
    }
  }
  MlpDataset ds;
  ds.inputs = MatrixXd(layout.d_model(), in_cols.size());
  ds.targets = MatrixXd(layout.d_model(), tgt_cols.size());
  for (size_t i = 0; i < in_cols.size(); ++i) {
    ds.inputs.col(static_cast<Eigen::Index>(i)) = in_cols[i];
    ds.targets.col(static_cast<Eigen::Index>(i)) = tgt_cols[i];
  }
  return ds;
}

VectorXd rule_layer_forward(const RuleLayerParams& p, const VectorXd& z) {
  VectorXd h = (p.w1 * z + p.b1).cwiseMax(0.0).cwiseMin(1.0);
  return z + p.w2 * h;
}

double reconstruction_loss(const RuleLayerParams& params,
                           const MlpDataset& dataset, double alpha) {
  if (params.w1.cols() != dataset.inputs.rows() ||
      params.w2.rows() != dataset.targets.rows() ||
      params.w1.rows() != params.w2.cols() ||
      params.b1.size() != params.w1.rows()) {
    throw std::invalid_argument("rule-layer parameter shapes do not match");
  }
  double loss = alpha * (params.w1.cwiseAbs().sum() +
                         params.b1.cwiseAbs().sum() +
                         params.w2.cwiseAbs().sum());
  for (Eigen::Index n = 0; n < dataset.size(); ++n) {
    VectorXd f = rule_layer_forward(params, dataset.inputs.col(n));
    loss += (f - dataset.targets.col(n)).cwiseAbs().sum();
  }
  return loss;
}

ProbeReport perturbation_probe(const RuleLayerParams& params,
                               const MlpDataset& dataset, double alpha,
                               double eps) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("probe requires 0 < alpha < 1");
  }
  if (!(eps > 0.0 && eps < 1.0)) {
    throw std::invalid_argument("probe requires 0 < eps < 1");
  }
  ProbeReport report;
  double base = reconstruction_loss(params, dataset, alpha);
  constexpr double kTol = 1e-12;

  RuleLayerParams p = params;
  auto probe_coord = [&](ProbeCoordinate::Tensor tensor, int row, int col,
                         double* slot) {
    ProbeCoordinate c;
    c.tensor = tensor;
    c.row = row;
    c.col = col;
    double saved = *slot;
    *slot = saved + eps;
    c.right_delta = reconstruction_loss(p, dataset, alpha) - base;
    *slot = saved - eps;
    c.left_delta = reconstruction_loss(p, dataset, alpha) - base;
    *slot = saved;
    c.strict_local_min = c.right_delta > kTol && c.left_delta > kTol;
    if (c.strict_local_min) report.strict_count += 1;
    report.coordinates.push_back(c);
  };

  for (int i = 0; i < p.w1.rows(); ++i) {
    for (int j = 0; j < p.w1.cols(); ++j) {
      probe_coord(ProbeCoordinate::Tensor::W1, i, j, &p.w1(i, j));
    }
  }
  for (int i = 0; i < p.b1.size(); ++i) {
    probe_coord(ProbeCoordinate::Tensor::B1, i, 0, &p.b1(i));
  }
  for (int i = 0; i < p.w2.rows(); ++i) {
    for (int j = 0; j < p.w2.cols(); ++j) {
      probe_coord(ProbeCoordinate::Tensor::W2, i, j, &p.w2(i, j));
    }
  }
  return report;
}

std::vector<RemovableConstraint> removable_constraints(
    const ProgramSpec& spec, const std::vector<Assignment>& data) {
  std::vector<RemovableConstraint> out;
  for (size_t ri = 0; ri < spec.rules.size(); ++ri) {
    for (size_t ci = 0; ci < spec.rules[ri].antecedent.size(); ++ci) {
      if (spec.rules[ri].antecedent[ci].var == spec.rules[ri].output_var) {
        continue;  // the output binding is structural
      }
      ProgramSpec mod = spec;
      mod.invalidate_cache();
      mod.rules[ri].antecedent.erase(mod.rules[ri].antecedent.begin() + ci);
      bool same = true;
      for (const Assignment& a : data) {
        try {
          if (!(apply_rules(spec, spec.rules, a) ==
                apply_rules(mod, mod.rules, a))) {
            same = false;
            break;
          }
        } catch (const std::exception&) {
          same = false;
          break;
        }
      }
      if (same) {
        out.push_back({static_cast<int>(ri),
                       spec.rules[ri].antecedent[ci].var,
                       spec.rules[ri].antecedent[ci].value});
      }
    }
  }
  return out;
}

std::vector<Assignment> collect_mlp_inputs(
    const ProgramSpec& spec, const std::vector<std::vector<int>>& inputs) {
  std::vector<Assignment> out;
  std::set<std::vector<std::string>> seen;
  for_each_mlp_in(spec, inputs,
                  [&](size_t, int, int, const Assignment& a,
                      const std::vector<int>&) {
                    std::vector<std::string> key;
                    key.reserve(a.values.size());
                    for (const auto& v : a.values) key.push_back(v.str());
                    if (seen.insert(std::move(key)).second) out.push_back(a);
                  });
  return out;
}

MlpDataset dataset_from_assignments(const ProgramSpec& spec,
                                    const std::vector<Assignment>& mlp_inputs) {
  VarLayout layout(spec);
  const VarTable& vt = spec.var_table();
  MlpDataset ds;
  ds.inputs = MatrixXd(layout.d_model(), mlp_inputs.size());
  ds.targets = MatrixXd(layout.d_model(), mlp_inputs.size());
  for (size_t i = 0; i < mlp_inputs.size(); ++i) {
    ds.inputs.col(static_cast<Eigen::Index>(i)) =
        layout.encode(mlp_inputs[i], vt);
    ds.targets.col(static_cast<Eigen::Index>(i)) =
        layout.encode(apply_rules(spec, spec.rules, mlp_inputs[i]), vt);
  }
  return ds;
}

std::string coverage_to_json(const CoverageReport& report) {
  nlohmann::json j;
  j["satisfied_rule_ids"] = report.satisfied_rule_ids;
  j["observed_token_ids"] = report.observed_token_ids;
  j["observed_positions"] = report.observed_positions;
  nlohmann::json counts;
  for (const auto& [rule, count] : report.rule_counts) {
    counts[std::to_string(rule)] = count;
  }
  j["rule_counts"] = std::move(counts);
  j["spec_rule_count"] = report.spec_rule_count;
  return j.dump(2);
}

std::string probe_to_json(const ProbeReport& report) {
  nlohmann::json j;
  j["total"] = report.total();
  j["strict"] = report.strict_count;
  nlohmann::json coords = nlohmann::json::array();
  for (const auto& c : report.coordinates) {
    if (c.strict_local_min) continue;  // list only the interesting ones
    const char* names[] = {"w1", "b1", "w2"};
    coords.push_back(nlohmann::json{
        {"tensor", names[static_cast<int>(c.tensor)]},
        {"row", c.row},
        {"col", c.col},
        {"left_delta", c.left_delta},
        {"right_delta", c.right_delta}});
  }
  j["non_strict"] = std::move(coords);
  return j.dump(2);
}

}  // namespace loom
