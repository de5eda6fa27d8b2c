#include "loom/program.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace loom {

VariableSpec VariableSpec::categorical(std::string name, int range,
                                       VarInit init,
                                       std::optional<Value> dflt) {
  VariableSpec v;
  v.name = std::move(name);
  v.kind = VarKind::Categorical;
  v.range = range;
  v.init = std::move(init);
  v.default_value = dflt.value_or(Value::cat(0));
  return v;
}

VariableSpec VariableSpec::numerical(std::string name,
                                     std::vector<double> buckets, VarInit init,
                                     std::optional<Value> dflt) {
  VariableSpec v;
  v.name = std::move(name);
  v.kind = VarKind::Numerical;
  v.buckets = std::move(buckets);
  v.init = std::move(init);
  v.default_value =
      dflt.value_or(Value::num(v.buckets.empty() ? 0.0 : v.buckets.front()));
  return v;
}

VariableSpec VariableSpec::set_var(std::string name, int universe_range,
                                   std::vector<std::vector<int>> allowed_sets,
                                   VarInit init, std::optional<Value> dflt) {
  VariableSpec v;
  v.name = std::move(name);
  v.kind = VarKind::SetVar;
  v.universe_range = universe_range;
  v.allowed_sets = std::move(allowed_sets);
  for (auto& s : v.allowed_sets) std::sort(s.begin(), s.end());
  v.init = std::move(init);
  v.default_value = dflt.value_or(
      v.allowed_sets.empty() ? Value::set({}) : Value::set(v.allowed_sets[0]));
  return v;
}

AttentionHeadSpec AttentionHeadSpec::qkv(std::string name, std::string query,
                                         std::string key, std::string value) {
  AttentionHeadSpec h;
  h.name = std::move(name);
  h.query = std::move(query);
  h.key = std::move(key);
  h.value = std::move(value);
  return h;
}

AttentionHeadSpec AttentionHeadSpec::relative(std::string name,
                                              std::string value, int offset) {
  AttentionHeadSpec h;
  h.name = std::move(name);
  h.query = kRelativeConstVar;
  h.key = kRelativeConstVar;
  h.value = std::move(value);
  h.relative_mask = std::set<int>{offset};
  return h;
}

const VarTable::Entry& VarTable::at(const std::string& name) const {
  int i = find(name);
  if (i < 0) throw std::logic_error("unknown variable: " + name);
  return entries[i];
}

int VarTable::discrete_cardinality(int var) const {
  const Entry& e = entries[var];
  int n = 0;
  switch (e.kind) {
    case VarKind::Categorical:
      n = e.range;
      break;
    case VarKind::Numerical:
      n = static_cast<int>(e.buckets.size());
      break;
    case VarKind::SetVar:
      n = static_cast<int>(e.allowed_sets.size());
      break;
  }
  return n + (e.is_head_output ? 1 : 0);
}

Value VarTable::value_from_discrete(int var, int id) const {
  const Entry& e = entries[var];
  int base = 0;
  switch (e.kind) {
    case VarKind::Categorical:
      base = e.range;
      break;
    case VarKind::Numerical:
      base = static_cast<int>(e.buckets.size());
      break;
    case VarKind::SetVar:
      base = static_cast<int>(e.allowed_sets.size());
      break;
  }
  if (id == base && e.is_head_output) return Value::null();
  if (id < 0 || id >= base) {
    throw std::logic_error("discrete id out of range for " + e.name);
  }
  switch (e.kind) {
    case VarKind::Categorical:
      return Value::cat(id);
    case VarKind::Numerical:
      return Value::num(e.buckets[id]);
    case VarKind::SetVar:
      return Value::set(e.allowed_sets[id]);
  }
  return Value::null();
}

int VarTable::discrete_from_value(int var, const Value& v) const {
  const Entry& e = entries[var];
  if (!v.is_defined()) return -1;
  switch (e.kind) {
    case VarKind::Categorical:
      return v.cat_id();
    case VarKind::Numerical:
      return nearest_bucket(e.buckets, v.num_value());
    case VarKind::SetVar: {
      for (size_t i = 0; i < e.allowed_sets.size(); ++i) {
        if (e.allowed_sets[i] == v.set_elems()) return static_cast<int>(i);
      }
      return -1;
    }
  }
  return -1;
}

int nearest_bucket(const std::vector<double>& buckets, double x) {
  if (buckets.empty()) return -1;
  int best = 0;
  double best_d = std::abs(x - buckets[0]);
  for (size_t i = 1; i < buckets.size(); ++i) {
    double d = std::abs(x - buckets[i]);
    // Strictly closer wins; ties keep the lower bucket.
    if (d < best_d) {
      best = static_cast<int>(i);
      best_d = d;
    }
  }
  return best;
}

const VarTable& ProgramSpec::var_table() const {
  if (!table_) {
    auto t = std::make_shared<VarTable>();
    for (const auto& v : variables) {
      VarTable::Entry e;
      e.name = v.name;
      e.kind = v.kind;
      e.range = v.range;
      e.buckets = v.buckets;
      e.universe_range = v.universe_range;
      e.allowed_sets = v.allowed_sets;
      e.is_head_output = false;
      e.init = v.init;
      e.default_value = v.default_value;
      t->index[e.name] = static_cast<int>(t->entries.size());
      t->entries.push_back(std::move(e));
    }
    for (const auto& h : heads) {
      VarTable::Entry e;
      e.name = h.name;
      e.kind = h.output_kind;
      e.range = h.output_range;
      e.buckets = h.output_buckets;
      e.is_head_output = true;
      e.default_value = Value::null();
      t->index[e.name] = static_cast<int>(t->entries.size());
      t->entries.push_back(std::move(e));
    }
    table_ = std::move(t);
  }
  return *table_;
}

const std::vector<PreparedRule>& ProgramSpec::prepared_rules() const {
  if (!prepared_) {
    const VarTable& vt = var_table();
    auto p = std::make_shared<std::vector<PreparedRule>>();
    p->reserve(rules.size());
    for (const auto& r : rules) {
      PreparedRule pr;
      pr.constraints.reserve(r.antecedent.size());
      for (const auto& c : r.antecedent) {
        pr.constraints.push_back({vt.find(c.var), c.value});
      }
      pr.out_var = vt.find(r.output_var);
      pr.new_value = r.new_value;
      p->push_back(std::move(pr));
    }
    prepared_ = std::move(p);
  }
  return *prepared_;
}

int ProgramSpec::head_index(const std::string& name) const {
  for (size_t i = 0; i < heads.size(); ++i) {
    if (heads[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

void finalize_variables(ProgramSpec& spec) {
  bool any_relative = false;
  for (const auto& h : spec.heads) {
    if (h.query == kRelativeConstVar || h.key == kRelativeConstVar) {
      any_relative = true;
    }
  }
  if (any_relative) {
    bool present = false;
    for (const auto& v : spec.variables) {
      if (v.name == kRelativeConstVar) present = true;
    }
    if (!present) {
      spec.variables.push_back(VariableSpec::categorical(
          kRelativeConstVar, 1, VarInit::constant_value(Value::cat(0))));
    }
  }
  // Infer head output specs from their value variables when unset.
  spec.invalidate_cache();
  for (auto& h : spec.heads) {
    if (h.output_kind == VarKind::Categorical && h.output_range == 0) {
      for (const auto& v : spec.variables) {
        if (v.name == h.value) {
          h.output_kind = v.kind == VarKind::Numerical ? VarKind::Numerical
                                                       : VarKind::Categorical;
          h.output_range = v.range;
          h.output_buckets = v.buckets;
        }
      }
    }
  }
  spec.invalidate_cache();
}

ProgramSpec add_reset_rules(ProgramSpec spec) {
  const VarTable& vt = spec.var_table();
  auto have = [&](const TransitionRule& r) {
    return std::find(spec.rules.begin(), spec.rules.end(), r) !=
           spec.rules.end();
  };
  for (const auto& h : spec.heads) {
    int var = vt.find(h.name);
    const auto& e = vt.entries[var];
    int n = e.kind == VarKind::Numerical ? static_cast<int>(e.buckets.size())
                                         : e.range;
    for (int v = 0; v < n; ++v) {
      TransitionRule r;
      r.antecedent = {Constraint{h.name, v}};
      r.output_var = h.name;
      r.old_value = v;
      r.new_value = TransitionRule::kNullValue;
      r.is_reset = true;
      if (!have(r)) spec.rules.push_back(std::move(r));
    }
  }
  return spec;
}

}  // namespace loom
