#include "loom/validate.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace loom {

std::vector<ValidationIssue> ValidationReport::errors() const {
  std::vector<ValidationIssue> out;
  for (const auto& i : issues) {
    if (i.severity == ValidationIssue::Severity::Error) out.push_back(i);
  }
  return out;
}

std::string ValidationReport::str() const {
  std::ostringstream os;
  for (const auto& i : issues) {
    os << (i.severity == ValidationIssue::Severity::Error ? "error" : "warn")
       << " [" << i.element << "]: " << i.message << "\n";
  }
  return os.str();
}

namespace {

void check_init_value(const VariableSpec& v, const Value& val,
                      const char* where, ValidationReport& rep) {
  auto err = [&](const std::string& m) {
    rep.issues.push_back(
        {ValidationIssue::Severity::Error, v.name, std::string(where) + m});
  };
  switch (v.kind) {
    case VarKind::Categorical:
      if (!val.is_defined() || val.kind() != Value::Kind::Cat) {
        err(" init value must be categorical");
      } else if (val.cat_id() < 0 || val.cat_id() >= v.range) {
        err(" init value " + val.str() + " outside [0, range)");
      }
      break;
    case VarKind::Numerical:
      if (!val.is_defined() || val.kind() != Value::Kind::Num) {
        err(" init value must be a real scalar");
      }
      break;
    case VarKind::SetVar:
      if (!val.is_defined() || val.kind() != Value::Kind::Set) {
        err(" init value must be a set");
      } else {
        bool found = false;
        for (const auto& s : v.allowed_sets) {
          if (s == val.set_elems()) found = true;
        }
        if (!found) err(" init set " + val.str() + " not in allowed_sets");
      }
      break;
  }
}

}  // namespace

ValidationReport validate_program(const ProgramSpec& spec) {
  ValidationReport rep;
  auto error = [&](const std::string& el, const std::string& m) {
    rep.issues.push_back({ValidationIssue::Severity::Error, el, m});
  };
  auto warn = [&](const std::string& el, const std::string& m) {
    rep.issues.push_back({ValidationIssue::Severity::Warning, el, m});
  };

  std::set<std::string> var_names;
  bool any_position_init = false;
  for (const auto& v : spec.variables) {
    if (!var_names.insert(v.name).second) {
      error(v.name, "duplicate variable name");
    }
    switch (v.kind) {
      case VarKind::Categorical:
        if (v.range < 1) error(v.name, "categorical range must be >= 1");
        break;
      case VarKind::Numerical: {
        if (v.buckets.empty()) error(v.name, "numerical bucket list is empty");
        for (size_t i = 1; i < v.buckets.size(); ++i) {
          if (!(v.buckets[i - 1] < v.buckets[i])) {
            error(v.name, "buckets must be strictly increasing");
            break;
          }
        }
        break;
      }
      case VarKind::SetVar: {
        if (v.universe_range < 1) error(v.name, "set universe must be >= 1");
        if (v.allowed_sets.empty()) error(v.name, "allowed_sets is empty");
        std::set<std::vector<int>> seen;
        for (const auto& s : v.allowed_sets) {
          if (!seen.insert(s).second) error(v.name, "duplicate allowed set");
          for (int e : s) {
            if (e < 0 || e >= v.universe_range) {
              error(v.name, "set element outside universe");
            }
          }
        }
        break;
      }
    }
    switch (v.init.kind) {
      case VarInit::Kind::Input:
        if (static_cast<int>(v.init.table.size()) != spec.input_range) {
          error(v.name, "input init table size != input_range");
        }
        for (const auto& val : v.init.table) {
          check_init_value(v, val, "input", rep);
        }
        break;
      case VarInit::Kind::Position:
        any_position_init = true;
        if (!spec.position_range) {
          error(v.name, "position init requires position_range");
        } else if (static_cast<int>(v.init.table.size()) !=
                   *spec.position_range) {
          error(v.name, "position init table size != position_range");
        }
        for (const auto& val : v.init.table) {
          check_init_value(v, val, "position", rep);
        }
        break;
      case VarInit::Kind::Constant:
        check_init_value(v, v.init.constant, "constant", rep);
        break;
      case VarInit::Kind::None:
        break;
    }
    check_init_value(v, v.default_value, "default", rep);
  }
  (void)any_position_init;

  if (spec.input_range < 1) error("input_range", "must be >= 1");
  if (spec.position_range && *spec.position_range < 1) {
    error("position_range", "must be >= 1 when present");
  }

  // Heads.
  std::set<std::string> head_names;
  for (const auto& h : spec.heads) {
    if (!head_names.insert(h.name).second) {
      error(h.name, "duplicate head output");
    }
    if (var_names.count(h.name)) {
      error(h.name, "head output collides with a declared variable");
    }
    auto kind_of = [&](const std::string& n) -> const VariableSpec* {
      for (const auto& v : spec.variables) {
        if (v.name == n) return &v;
      }
      return nullptr;
    };
    const VariableSpec* q = kind_of(h.query);
    const VariableSpec* k = kind_of(h.key);
    const VariableSpec* val = kind_of(h.value);
    if (!q) {
      error(h.name, "query variable '" + h.query + "' not declared");
    } else if (q->kind == VarKind::Numerical) {
      error(h.name, "query variable must be categorical or set-valued");
    }
    if (!k) {
      error(h.name, "key variable '" + h.key + "' not declared");
    } else if (k->kind != VarKind::Categorical) {
      error(h.name, "key variable must be categorical");
    }
    if (!val) {
      error(h.name, "value variable '" + h.value + "' not declared");
    } else {
      bool val_num = val->kind == VarKind::Numerical;
      bool out_num = h.output_kind == VarKind::Numerical;
      if (val->kind == VarKind::SetVar) {
        error(h.name, "value variable may not be set-valued");
      } else if (val_num != out_num) {
        error(h.name, "value and output must both be categorical or both "
                      "numerical");
      }
    }
    if (h.output_kind == VarKind::Categorical && h.output_range < 1) {
      error(h.name, "categorical head output needs a positive range");
    }
    if (h.output_kind == VarKind::Numerical && h.output_buckets.empty()) {
      error(h.name, "numerical head output needs a bucket list");
    }
  }

  const VarTable& vt = spec.var_table();

  // Output and halt.
  int out = vt.find(spec.output_var);
  if (out < 0) {
    error(spec.output_var.empty() ? "output" : spec.output_var,
          "output variable not declared");
  } else if (vt.entries[out].kind != VarKind::Categorical) {
    error(spec.output_var, "output variable must be categorical");
  }
  if (spec.halt) {
    int hv = vt.find(spec.halt->var);
    if (hv < 0) {
      error(spec.halt->var, "halt variable not declared");
    } else if (vt.entries[hv].kind != VarKind::Categorical) {
      error(spec.halt->var, "halt variable must be categorical");
    } else if (spec.halt->value < 0 ||
               spec.halt->value >= vt.entries[hv].range) {
      error(spec.halt->var, "halt value outside the variable range");
    }
  }

  // Rules.
  for (size_t ri = 0; ri < spec.rules.size(); ++ri) {
    const TransitionRule& r = spec.rules[ri];
    std::string el = "rule#" + std::to_string(ri);
    int ov = vt.find(r.output_var);
    if (ov < 0) {
      error(el, "consequent variable '" + r.output_var + "' not declared");
      continue;
    }
    const auto& oe = vt.entries[ov];
    if (oe.is_head_output && !r.is_reset) {
      error(el, "attention output '" + r.output_var +
                    "' may not be written by an authored rule");
    }
    if (!oe.is_head_output && oe.kind != VarKind::Categorical) {
      error(el, "rule consequents may only target categorical variables");
    }
    if (r.new_value == TransitionRule::kNullValue && !oe.is_head_output) {
      error(el, "null consequent is only allowed for attention outputs");
    }
    if (r.new_value == r.old_value) {
      error(el, "no-op rule (new value equals old value)");
    }
    bool found_output = false;
    std::set<std::string> seen_vars;
    for (const auto& c : r.antecedent) {
      if (!seen_vars.insert(c.var).second) {
        error(el, "antecedent constrains '" + c.var + "' twice");
      }
      int cv = vt.find(c.var);
      if (cv < 0) {
        error(el, "antecedent variable '" + c.var + "' not declared");
        continue;
      }
      int n = vt.discrete_cardinality(cv) -
              (vt.entries[cv].is_head_output ? 1 : 0);
      if (c.value < 0 || c.value >= n) {
        error(el, "antecedent value " + std::to_string(c.value) +
                      " out of range for '" + c.var + "'");
      }
      if (c.var == r.output_var) {
        found_output = true;
        if (c.value != r.old_value) {
          error(el, "old value does not match the antecedent constraint");
        }
      }
    }
    if (!found_output) {
      error(el, "output variable must appear in the antecedent");
    }
    int n = vt.discrete_cardinality(ov) - (oe.is_head_output ? 1 : 0);
    if (r.new_value != TransitionRule::kNullValue &&
        (r.new_value < 0 || r.new_value >= n)) {
      error(el, "new value out of range");
    }
  }

  // Heuristic warnings: variables that nothing reads or writes.
  std::set<std::string> used;
  for (const auto& h : spec.heads) {
    used.insert(h.query);
    used.insert(h.key);
    used.insert(h.value);
  }
  for (const auto& r : spec.rules) {
    used.insert(r.output_var);
    for (const auto& c : r.antecedent) used.insert(c.var);
  }
  used.insert(spec.output_var);
  if (spec.halt) used.insert(spec.halt->var);
  for (const auto& v : spec.variables) {
    if (!used.count(v.name) && v.name != kRelativeConstVar) {
      warn(v.name, "variable is never read or written");
    }
  }

  // Heuristic: a rule constraining a constant-init variable to a value it
  // can never take (no rule writes it) is unreachable.
  for (size_t ri = 0; ri < spec.rules.size(); ++ri) {
    const TransitionRule& r = spec.rules[ri];
    for (const auto& c : r.antecedent) {
      const VariableSpec* vs = nullptr;
      for (const auto& v : spec.variables) {
        if (v.name == c.var) vs = &v;
      }
      if (!vs || vs->kind != VarKind::Categorical) continue;
      if (vs->init.kind != VarInit::Kind::Constant) continue;
      if (vs->init.constant.cat_id() == c.value) continue;
      bool written = false;
      for (const auto& r2 : spec.rules) {
        if (r2.output_var == c.var && r2.new_value == c.value) written = true;
      }
      if (!written) {
        warn("rule#" + std::to_string(ri),
             "antecedent value " + std::to_string(c.value) + " of '" + c.var +
                 "' looks unreachable");
      }
    }
  }

  return rep;
}

void require_valid(const ProgramSpec& spec) {
  ValidationReport rep = validate_program(spec);
  if (!rep.ok()) {
    throw std::invalid_argument("program validation failed:\n" + rep.str());
  }
}

}  // namespace loom
