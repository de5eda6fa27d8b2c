#include "loom/builder.hpp"

#include <algorithm>

namespace loom {

RuleBuilder::RuleBuilder(const ProgramSpec& spec)
    : spec_(spec), vt_(spec.var_table()) {}

void RuleBuilder::get(const std::vector<std::string>& vars,
                      const Visitor& body) {
  std::vector<int> ids;
  std::vector<int> counts;
  for (const auto& name : vars) {
    int v = vt_.find(name);
    if (v < 0) throw BuilderError("get: unknown variable '" + name + "'");
    for (const auto& b : scope_) {
      if (b.var == v) {
        throw BuilderError("get: '" + name + "' is already in scope");
      }
    }
    for (int prior : ids) {
      if (prior == v) {
        throw BuilderError("get: '" + name + "' listed twice");
      }
    }
    ids.push_back(v);
    // Proper values only; the Null state of attention outputs cannot appear
    // in a rule antecedent.
    counts.push_back(vt_.discrete_cardinality(v) -
                     (vt_.entries[v].is_head_output ? 1 : 0));
  }

  size_t base = scope_.size();
  for (int v : ids) scope_.push_back({v, 0});

  std::vector<int> odo(ids.size(), 0);
  std::vector<Value> tuple(ids.size());
  bool done = ids.empty();
  if (ids.empty()) {
    body(tuple);
    return;
  }
  while (!done) {
    for (size_t i = 0; i < ids.size(); ++i) {
      scope_[base + i].value = odo[i];
      tuple[i] = vt_.value_from_discrete(ids[i], odo[i]);
    }
    body(tuple);
    int i = static_cast<int>(ids.size()) - 1;
    while (i >= 0) {
      if (++odo[i] < counts[i]) break;
      odo[i] = 0;
      --i;
    }
    if (i < 0) done = true;
  }
  scope_.resize(base);
}

void RuleBuilder::get(const std::string& var,
                      const std::function<void(const Value&)>& body) {
  get(std::vector<std::string>{var},
      [&](const std::vector<Value>& t) { body(t[0]); });
}

void RuleBuilder::set(const std::string& var, const Value& new_value) {
  int v = vt_.find(var);
  if (v < 0) throw BuilderError("set: unknown variable '" + var + "'");
  int id = vt_.discrete_from_value(v, new_value);
  if (id < 0) throw BuilderError("set: value not representable for " + var);
  emit(v, id);
}

void RuleBuilder::set(const std::string& var, int cat_value) {
  int v = vt_.find(var);
  if (v < 0) throw BuilderError("set: unknown variable '" + var + "'");
  if (vt_.entries[v].kind != VarKind::Categorical) {
    throw BuilderError("set: integer value requires a categorical variable");
  }
  emit(v, cat_value);
}

void RuleBuilder::set_null(const std::string& var) {
  int v = vt_.find(var);
  if (v < 0) throw BuilderError("set_null: unknown variable '" + var + "'");
  if (!vt_.entries[v].is_head_output) {
    throw BuilderError("set_null: '" + var + "' is not an attention output");
  }
  emit(v, TransitionRule::kNullValue);
}

void RuleBuilder::emit(int var, int new_value) {
  const Binding* bound = nullptr;
  for (const auto& b : scope_) {
    if (b.var == var) bound = &b;
  }
  if (!bound) {
    throw BuilderError("set: output variable '" + vt_.entries[var].name +
                       "' is not in scope");
  }
  if (new_value == bound->value) return;  // no-op rules are absent
  int n = vt_.discrete_cardinality(var) -
          (vt_.entries[var].is_head_output ? 1 : 0);
  if (new_value != TransitionRule::kNullValue &&
      (new_value < 0 || new_value >= n)) {
    throw BuilderError("set: value out of range for " +
                       vt_.entries[var].name);
  }
  TransitionRule r;
  r.antecedent.reserve(scope_.size());
  for (const auto& b : scope_) {
    r.antecedent.push_back({vt_.entries[b.var].name, b.value});
  }
  r.output_var = vt_.entries[var].name;
  r.old_value = bound->value;
  r.new_value = new_value;
  r.is_reset = new_value == TransitionRule::kNullValue &&
               vt_.entries[var].is_head_output;
  rules_.push_back(std::move(r));
}

}  // namespace loom
