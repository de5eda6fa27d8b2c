#include "loom/compiler.hpp"

#include <json.hpp>

#include "loom/json_io.hpp"
#include "loom/validate.hpp"

namespace loom {

using Eigen::MatrixXd;
using Eigen::VectorXd;

ExpandedLayout::ExpandedLayout(const ProgramSpec& spec) {
  const VarTable& vt = spec.var_table();
  for (size_t v = 0; v < vt.entries.size(); ++v) {
    offsets_.push_back(width_);
    width_ += vt.discrete_cardinality(static_cast<int>(v)) -
              (vt.entries[v].is_head_output ? 1 : 0);
  }
}

std::pair<MatrixXd, std::optional<MatrixXd>> compile_embeddings(
    const ProgramSpec& spec, const VarLayout& layout) {
  const VarTable& vt = spec.var_table();
  MatrixXd token = MatrixXd::Zero(spec.input_range, layout.d_model());
  std::optional<MatrixXd> pos;
  if (spec.position_range) {
    pos = MatrixXd::Zero(*spec.position_range, layout.d_model());
  }

  auto write_value = [&](MatrixXd& m, int row, int var, const Value& val) {
    if (!val.is_defined()) return;
    const auto& e = vt.entries[var];
    switch (e.kind) {
      case VarKind::Categorical:
        m(row, layout.slot(var, val.cat_id())) = 1.0;
        break;
      case VarKind::Numerical:
        m(row, layout.scalar_slot(var)) = val.num_value();
        break;
      case VarKind::SetVar:
        for (int elem : val.set_elems()) {
          m(row, layout.slot(var, elem)) = 1.0;
        }
        break;
    }
  };

  for (const auto& v : spec.variables) {
    int var = vt.find(v.name);
    switch (v.init.kind) {
      case VarInit::Kind::Input:
        for (int x = 0; x < spec.input_range; ++x) {
          write_value(token, x, var, v.init.table[x]);
        }
        break;
      case VarInit::Kind::Position: {
        if (!pos) {
          throw CompileError("position init on '" + v.name +
                             "' without position_range");
        }
        for (int i = 0; i < *spec.position_range; ++i) {
          Value val = i < static_cast<int>(v.init.table.size())
                          ? v.init.table[i]
                          : v.default_value;
          write_value(*pos, i, var, val);
        }
        break;
      }
      case VarInit::Kind::Constant:
        // Constants ride on the token table so that z0 = token + position.
        for (int x = 0; x < spec.input_range; ++x) {
          write_value(token, x, var, v.init.constant);
        }
        break;
      case VarInit::Kind::None:
        for (int x = 0; x < spec.input_range; ++x) {
          write_value(token, x, var, v.default_value);
        }
        break;
    }
  }
  return {std::move(token), std::move(pos)};
}

HeadWeights compile_head(const ProgramSpec& spec,
                         const AttentionHeadSpec& head,
                         const VarLayout& layout, double sharpness) {
  const VarTable& vt = spec.var_table();
  int qv = vt.find(head.query);
  int kv = vt.find(head.key);
  int vv = vt.find(head.value);
  int ov = vt.find(head.name);
  int d_qk = std::max(layout.var_width(qv), layout.var_width(kv));

  HeadWeights w;
  w.wq = MatrixXd::Zero(d_qk, layout.d_model());
  w.wk = MatrixXd::Zero(d_qk, layout.d_model());
  for (int r = 0; r < layout.var_width(qv); ++r) {
    w.wq(r, layout.var_offset(qv) + r) = sharpness;
  }
  for (int r = 0; r < layout.var_width(kv); ++r) {
    w.wk(r, layout.var_offset(kv) + r) = sharpness;
  }

  if (head.output_kind == VarKind::Numerical) {
    w.wv = MatrixXd::Zero(1, layout.d_model());
    w.wv(0, layout.scalar_slot(vv)) = 1.0;
    w.wo = MatrixXd::Zero(layout.d_model(), 1);
    w.wo(layout.scalar_slot(ov), 0) = 1.0;
  } else {
    int d_v = layout.var_width(vv);
    w.wv = MatrixXd::Zero(d_v, layout.d_model());
    w.wo = MatrixXd::Zero(layout.d_model(), d_v);
    for (int r = 0; r < d_v; ++r) {
      w.wv(r, layout.var_offset(vv) + r) = 1.0;
      if (r < layout.var_width(ov)) {
        w.wo(layout.var_offset(ov) + r, r) = 1.0;
      }
    }
  }
  w.relative_mask = head.relative_mask;
  return w;
}

MlpWeights compile_mlp(const ProgramSpec& spec, const VarLayout& layout,
                       double expansion_gain) {
  const VarTable& vt = spec.var_table();
  ExpandedLayout ex(spec);
  int d = layout.d_model();

  MlpWeights mlp;
  mlp.expansion_identity = true;
  for (const auto& e : vt.entries) {
    if (e.kind != VarKind::Categorical) mlp.expansion_identity = false;
  }

  if (mlp.expansion_identity) {
    mlp.l1_w = MatrixXd::Identity(d, d);
    mlp.l1_b = VectorXd::Zero(d);
    mlp.l2_w = MatrixXd::Identity(d, d);
    mlp.l2_b = VectorXd::Zero(d);
  } else {
    // Layer 1 emits, per variable: identity copies of categorical value
    // dimensions, one steep step unit per interior bucket threshold of a
    // numerical variable, and one exact-match unit per allowed set.
    struct Unit {
      int var;
      int index;  // value / threshold / set index
    };
    int u_width = 0;
    std::vector<int> u_offsets(vt.entries.size(), 0);
    for (size_t v = 0; v < vt.entries.size(); ++v) {
      const auto& e = vt.entries[v];
      u_offsets[v] = u_width;
      switch (e.kind) {
        case VarKind::Categorical:
          u_width += e.range;
          break;
        case VarKind::Numerical:
          u_width += static_cast<int>(e.buckets.size()) - 1;
          break;
        case VarKind::SetVar:
          u_width += static_cast<int>(e.allowed_sets.size());
          break;
      }
    }
    mlp.l1_w = MatrixXd::Zero(u_width, d);
    mlp.l1_b = VectorXd::Zero(u_width);
    mlp.l2_w = MatrixXd::Zero(ex.width(), u_width);
    mlp.l2_b = VectorXd::Zero(ex.width());
    for (size_t v = 0; v < vt.entries.size(); ++v) {
      const auto& e = vt.entries[v];
      int uo = u_offsets[v];
      int eo = ex.var_offset(static_cast<int>(v));
      switch (e.kind) {
        case VarKind::Categorical:
          for (int i = 0; i < e.range; ++i) {
            mlp.l1_w(uo + i, layout.var_offset(static_cast<int>(v)) + i) = 1.0;
            mlp.l2_w(eo + i, uo + i) = 1.0;
          }
          break;
        case VarKind::Numerical: {
          int b = static_cast<int>(e.buckets.size());
          int x_dim = layout.scalar_slot(static_cast<int>(v));
          for (int t = 0; t < b - 1; ++t) {
            double threshold = 0.5 * (e.buckets[t] + e.buckets[t + 1]);
            mlp.l1_w(uo + t, x_dim) = expansion_gain;
            mlp.l1_b(uo + t) = -expansion_gain * threshold;
          }
          // indicator_0 = 1 - step_0; indicator_i = step_{i-1} - step_i;
          // indicator_{B-1} = step_{B-2}. Boundary steps are omitted.
          for (int i = 0; i < b; ++i) {
            if (i == 0) {
              mlp.l2_b(eo) = 1.0;
              if (b > 1) mlp.l2_w(eo, uo) = -1.0;
            } else {
              mlp.l2_w(eo + i, uo + i - 1) = 1.0;
              if (i < b - 1) mlp.l2_w(eo + i, uo + i) = -1.0;
            }
          }
          break;
        }
        case VarKind::SetVar: {
          for (size_t s = 0; s < e.allowed_sets.size(); ++s) {
            const auto& elems = e.allowed_sets[s];
            std::vector<bool> member(e.universe_range, false);
            for (int el : elems) member[el] = true;
            for (int el = 0; el < e.universe_range; ++el) {
              mlp.l1_w(uo + static_cast<int>(s),
                       layout.var_offset(static_cast<int>(v)) + el) =
                  member[el] ? 1.0 : -1.0;
            }
            mlp.l1_b(uo + static_cast<int>(s)) =
                1.0 - static_cast<double>(elems.size());
            mlp.l2_w(eo + static_cast<int>(s), uo + static_cast<int>(s)) = 1.0;
          }
          break;
        }
      }
    }
  }

  int n_rules = static_cast<int>(spec.rules.size());
  mlp.w1 = MatrixXd::Zero(n_rules, ex.width());
  mlp.b1 = VectorXd::Zero(n_rules);
  mlp.w2 = MatrixXd::Zero(d, n_rules);
  for (int r = 0; r < n_rules; ++r) {
    const TransitionRule& rule = spec.rules[r];
    for (const auto& c : rule.antecedent) {
      int v = vt.find(c.var);
      mlp.w1(r, ex.slot(v, c.value)) = 1.0;
    }
    mlp.b1(r) = 1.0 - static_cast<double>(rule.antecedent.size());
    int ov = vt.find(rule.output_var);
    const auto& oe = vt.entries[ov];
    if (oe.kind == VarKind::Numerical) {
      // Null reset of a numerical attention output subtracts the matched
      // bucket's representative value.
      if (rule.new_value != TransitionRule::kNullValue) {
        throw CompileError("numerical consequents must be null resets");
      }
      mlp.w2(layout.scalar_slot(ov), r) = -oe.buckets[rule.old_value];
    } else {
      mlp.w2(layout.slot(ov, rule.old_value), r) = -1.0;
      if (rule.new_value != TransitionRule::kNullValue) {
        mlp.w2(layout.slot(ov, rule.new_value), r) = 1.0;
      }
    }
  }
  return mlp;
}

namespace {

inline VectorXd clip01(VectorXd v) {
  return v.cwiseMax(0.0).cwiseMin(1.0);
}

VectorXd expand(const MlpWeights& mlp, const VectorXd& z) {
  if (mlp.expansion_identity) return clip01(z);
  VectorXd u = clip01(mlp.l1_w * z + mlp.l1_b);
  return clip01(mlp.l2_w * u + mlp.l2_b);
}

}  // namespace

VectorXd mlp_rule_activations(const MlpWeights& mlp, const VectorXd& z) {
  return clip01(mlp.w1 * expand(mlp, z) + mlp.b1);
}

VectorXd mlp_forward(const MlpWeights& mlp, const VectorXd& z) {
  return z + mlp.w2 * mlp_rule_activations(mlp, z);
}

ModelWeights compile(const ProgramSpec& spec, const CompileOptions& opts) {
  require_valid(spec);
  const VarTable& vt = spec.var_table();
  // Every head needs its reset family. Minimized programs may have dropped
  // resets for values never observed, so only outright absence is an error.
  for (const auto& h : spec.heads) {
    bool any = false;
    for (const auto& r : spec.rules) {
      if (r.is_reset && r.output_var == h.name) any = true;
    }
    if (!any) {
      throw CompileError("no reset rules for head '" + h.name +
                         "'; call add_reset_rules first");
    }
  }
  (void)vt;

  VarLayout layout(spec);
  ModelWeights w;
  auto [token, pos] = compile_embeddings(spec, layout);
  w.token_embed = std::move(token);
  w.pos_embed = std::move(pos);
  for (const auto& h : spec.heads) {
    w.heads.push_back(compile_head(spec, h, layout, opts.sharpness));
  }
  w.mlp = compile_mlp(spec, layout, opts.expansion_gain);

  int out_var = vt.find(spec.output_var);
  int out_range = vt.entries[out_var].range;
  w.output_proj = MatrixXd::Zero(out_range, layout.d_model());
  for (int v = 0; v < out_range; ++v) {
    w.output_proj(v, layout.slot(out_var, v)) = 1.0;
  }

  w.sharpness = opts.sharpness;
  w.expansion_gain = opts.expansion_gain;
  w.relative_bias = opts.relative_bias;
  w.sink_logit = 0.5 * opts.sharpness * opts.sharpness;
  w.program = spec;
  w.d_model = layout.d_model();
  return w;
}

namespace {

nlohmann::json matrix_to_json(const MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

MatrixXd matrix_from_json(const nlohmann::json& j) {
  if (j.empty()) return MatrixXd(0, 0);
  MatrixXd m(j.size(), j[0].size());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index jj = 0; jj < m.cols(); ++jj) {
      m(i, jj) = j[i][jj].get<double>();
    }
  }
  return m;
}

nlohmann::json vector_to_json(const VectorXd& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

VectorXd vector_from_json(const nlohmann::json& j) {
  VectorXd v(j.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = j[i].get<double>();
  return v;
}

}  // namespace

std::string serialize_weights(const ModelWeights& w) {
  nlohmann::json j;
  j["format_version"] = ModelWeights::kFormatVersion;
  nlohmann::json meta;
  meta["d_model"] = w.d_model;
  meta["sharpness"] = w.sharpness;
  meta["expansion_gain"] = w.expansion_gain;
  meta["relative_bias"] = w.relative_bias;
  meta["sink_logit"] = w.sink_logit;
  meta["program"] = spec_to_json(w.program);
  j["meta"] = std::move(meta);

  nlohmann::json t;
  t["token_embed"] = matrix_to_json(w.token_embed);
  if (w.pos_embed) t["pos_embed"] = matrix_to_json(*w.pos_embed);
  nlohmann::json heads = nlohmann::json::array();
  for (const auto& h : w.heads) {
    nlohmann::json jh;
    jh["wq"] = matrix_to_json(h.wq);
    jh["wk"] = matrix_to_json(h.wk);
    jh["wv"] = matrix_to_json(h.wv);
    jh["wo"] = matrix_to_json(h.wo);
    if (h.relative_mask) {
      jh["relative_mask"] =
          std::vector<int>(h.relative_mask->begin(), h.relative_mask->end());
    }
    heads.push_back(std::move(jh));
  }
  t["heads"] = std::move(heads);
  nlohmann::json mlp;
  mlp["expansion_identity"] = w.mlp.expansion_identity;
  mlp["l1_w"] = matrix_to_json(w.mlp.l1_w);
  mlp["l1_b"] = vector_to_json(w.mlp.l1_b);
  mlp["l2_w"] = matrix_to_json(w.mlp.l2_w);
  mlp["l2_b"] = vector_to_json(w.mlp.l2_b);
  mlp["w1"] = matrix_to_json(w.mlp.w1);
  mlp["b1"] = vector_to_json(w.mlp.b1);
  mlp["w2"] = matrix_to_json(w.mlp.w2);
  t["mlp"] = std::move(mlp);
  t["output_proj"] = matrix_to_json(w.output_proj);
  j["tensors"] = std::move(t);
  return j.dump();
}

ModelWeights deserialize_weights(const std::string& bytes) {
  nlohmann::json j = nlohmann::json::parse(bytes);
  int version = j.at("format_version").get<int>();
  if (version != ModelWeights::kFormatVersion) {
    throw SerializationError("unsupported weight format version " +
                             std::to_string(version));
  }
  ModelWeights w;
  const auto& meta = j.at("meta");
  w.d_model = meta.at("d_model").get<int>();
  w.sharpness = meta.at("sharpness").get<double>();
  w.expansion_gain = meta.at("expansion_gain").get<double>();
  w.relative_bias = meta.at("relative_bias").get<double>();
  w.sink_logit = meta.at("sink_logit").get<double>();
  w.program = spec_from_json(meta.at("program"));

  const auto& t = j.at("tensors");
  w.token_embed = matrix_from_json(t.at("token_embed"));
  if (t.contains("pos_embed")) {
    w.pos_embed = matrix_from_json(t.at("pos_embed"));
  }
  for (const auto& jh : t.at("heads")) {
    HeadWeights h;
    h.wq = matrix_from_json(jh.at("wq"));
    h.wk = matrix_from_json(jh.at("wk"));
    h.wv = matrix_from_json(jh.at("wv"));
    h.wo = matrix_from_json(jh.at("wo"));
    if (jh.contains("relative_mask")) {
      auto v = jh.at("relative_mask").get<std::vector<int>>();
      h.relative_mask = std::set<int>(v.begin(), v.end());
    }
    w.heads.push_back(std::move(h));
  }
  const auto& mlp = t.at("mlp");
  w.mlp.expansion_identity = mlp.at("expansion_identity").get<bool>();
  w.mlp.l1_w = matrix_from_json(mlp.at("l1_w"));
  w.mlp.l1_b = vector_from_json(mlp.at("l1_b"));
  w.mlp.l2_w = matrix_from_json(mlp.at("l2_w"));
  w.mlp.l2_b = vector_from_json(mlp.at("l2_b"));
  w.mlp.w1 = matrix_from_json(mlp.at("w1"));
  w.mlp.b1 = vector_from_json(mlp.at("b1"));
  w.mlp.w2 = matrix_from_json(mlp.at("w2"));
  w.output_proj = matrix_from_json(t.at("output_proj"));
  return w;
}

bool weights_equal(const ModelWeights& a, const ModelWeights& b) {
  auto eq = [](const MatrixXd& x, const MatrixXd& y) {
    return x.rows() == y.rows() && x.cols() == y.cols() && x == y;
  };
  if (!eq(a.token_embed, b.token_embed)) return false;
  if (a.pos_embed.has_value() != b.pos_embed.has_value()) return false;
  if (a.pos_embed && !eq(*a.pos_embed, *b.pos_embed)) return false;
  if (a.heads.size() != b.heads.size()) return false;
  for (size_t i = 0; i < a.heads.size(); ++i) {
    if (!eq(a.heads[i].wq, b.heads[i].wq) ||
        !eq(a.heads[i].wk, b.heads[i].wk) ||
        !eq(a.heads[i].wv, b.heads[i].wv) ||
        !eq(a.heads[i].wo, b.heads[i].wo) ||
        a.heads[i].relative_mask != b.heads[i].relative_mask) {
      return false;
    }
  }
  if (!eq(a.mlp.l1_w, b.mlp.l1_w) || !eq(a.mlp.l2_w, b.mlp.l2_w) ||
      !eq(a.mlp.w1, b.mlp.w1) || !eq(a.mlp.w2, b.mlp.w2)) {
    return false;
  }
  if (a.mlp.l1_b != b.mlp.l1_b || a.mlp.l2_b != b.mlp.l2_b ||
      a.mlp.b1 != b.mlp.b1) {
    return false;
  }
  return eq(a.output_proj, b.output_proj) && a.sharpness == b.sharpness &&
         a.sink_logit == b.sink_logit;
}

}  // namespace loom
