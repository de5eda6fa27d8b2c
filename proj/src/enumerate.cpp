#include "loom/enumerate.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace loom {

FfnView::FfnView(const ProgramSpec& spec, Assignment& a)
    : vt_(spec.var_table()), a_(a), pending_(a) {
  read_mask_.assign(vt_.entries.size(), false);
}

int FfnView::lookup(const std::string& name) {
  int v = vt_.find(name);
  if (v < 0) throw EnumerateError("ffn references unknown variable " + name);
  return v;
}

const Value& FfnView::value(const std::string& name) {
  int v = lookup(name);
  if (!read_mask_[v]) {
    read_mask_[v] = true;
    reads_.push_back(v);
  }
  return a_.values[v];
}

bool FfnView::eq(const std::string& name, int cat_id) {
  const Value& v = value(name);
  int var = vt_.find(name);
  if (v.is_ambiguous()) {
    throw UndefinedReadError("ambiguous value of " + name + " compared");
  }
  if (!v.is_defined()) return false;
  return vt_.discrete_from_value(var, v) == cat_id;
}

bool FfnView::is_null(const std::string& name) {
  const Value& v = value(name);
  return v.is_null() || v.is_empty_undefined();
}

bool FfnView::is_defined(const std::string& name) {
  return value(name).is_defined();
}

int FfnView::cat(const std::string& name) {
  const Value& v = value(name);
  if (v.kind() != Value::Kind::Cat) throw SkipAssignment{};
  return v.cat_id();
}

double FfnView::num(const std::string& name) {
  const Value& v = value(name);
  if (v.kind() != Value::Kind::Num) throw SkipAssignment{};
  return v.num_value();
}

void FfnView::set(const std::string& name, int cat_id) {
  set(name, Value::cat(cat_id));
}

void FfnView::set(const std::string& name, const Value& v) {
  int var = lookup(name);
  pending_.values[var] = v;
  for (auto& w : writes_) {
    if (w.first == var) {
      w.second = v;
      return;
    }
  }
  writes_.push_back({var, v});
}

namespace {

// Sorts antecedent constraints into VarTable order for stable comparison.
void normalize(TransitionRule& r, const VarTable& vt) {
  std::sort(r.antecedent.begin(), r.antecedent.end(),
            [&](const Constraint& a, const Constraint& b) {
              return vt.find(a.var) < vt.find(b.var);
            });
}

struct RuleKey {
  std::vector<std::pair<std::string, int>> ante;
  std::string out;
  int old_v;
  int new_v;
  bool operator<(const RuleKey& o) const {
    return std::tie(ante, out, old_v, new_v) <
           std::tie(o.ante, o.out, o.old_v, o.new_v);
  }
};

RuleKey key_of(const TransitionRule& r) {
  RuleKey k;
  for (const auto& c : r.antecedent) k.ante.push_back({c.var, c.value});
  k.out = r.output_var;
  k.old_v = r.old_value;
  k.new_v = r.new_value;
  return k;
}

// Drops constraints whose every proper value appears with an otherwise
// identical rule. Repeats until stable, preserving first-occurrence order.
void covering_merge(std::vector<TransitionRule>& rules, const VarTable& vt) {
  bool changed = true;
  while (changed) {
    changed = false;
    // Group by (antecedent minus candidate var, consequent).
    for (size_t vi = 0; vi < vt.entries.size(); ++vi) {
      const std::string& vname = vt.entries[vi].name;
      int proper = vt.discrete_cardinality(static_cast<int>(vi)) -
                   (vt.entries[vi].is_head_output ? 1 : 0);
      if (proper <= 1) continue;
      std::map<RuleKey, std::vector<size_t>> groups;
      for (size_t i = 0; i < rules.size(); ++i) {
        const TransitionRule& r = rules[i];
        if (r.output_var == vname) continue;  // the output stays constrained
        RuleKey k;
        bool has = false;
        for (const auto& c : r.antecedent) {
          if (c.var == vname) {
            has = true;
          } else {
            k.ante.push_back({c.var, c.value});
          }
        }
        if (!has) continue;
        k.out = r.output_var;
        k.old_v = r.old_value;
        k.new_v = r.new_value;
        groups[k].push_back(i);
      }
      std::set<size_t> drop;
      std::map<size_t, TransitionRule> replace;
      for (auto& [k, idxs] : groups) {
        std::set<int> covered;
        for (size_t i : idxs) {
          for (const auto& c : rules[i].antecedent) {
            if (c.var == vname) covered.insert(c.value);
          }
        }
        if (static_cast<int>(covered.size()) == proper) {
          size_t keep = *std::min_element(idxs.begin(), idxs.end());
          TransitionRule merged = rules[keep];
          merged.antecedent.erase(
              std::remove_if(merged.antecedent.begin(),
                             merged.antecedent.end(),
                             [&](const Constraint& c) { return c.var == vname; }),
              merged.antecedent.end());
          replace[keep] = merged;
          for (size_t i : idxs) {
            if (i != keep) drop.insert(i);
          }
        }
      }
      if (!replace.empty()) {
        std::vector<TransitionRule> next;
        next.reserve(rules.size());
        for (size_t i = 0; i < rules.size(); ++i) {
          if (drop.count(i)) continue;
          if (auto it = replace.find(i); it != replace.end()) {
            next.push_back(it->second);
          } else {
            next.push_back(rules[i]);
          }
        }
        rules = std::move(next);
        changed = true;
      }
    }
  }
}

bool antecedent_subset(const TransitionRule& a, const TransitionRule& b) {
  for (const auto& ca : a.antecedent) {
    bool found = false;
    for (const auto& cb : b.antecedent) {
      if (ca == cb) found = true;
    }
    if (!found) return false;
  }
  return true;
}

}  // namespace

std::vector<TransitionRule> enumerate_rules(const ProgramSpec& spec,
                                            const FfnFn& ffn,
                                            const EnumerateOptions& opts) {
  const VarTable& vt = spec.var_table();
  std::vector<int> vars;
  std::vector<int> counts;
  std::set<std::string> excluded(opts.excluded.begin(), opts.excluded.end());
  std::uint64_t product = 1;
  for (size_t v = 0; v < vt.entries.size(); ++v) {
    if (excluded.count(vt.entries[v].name)) continue;
    if (vt.entries[v].name == kRelativeConstVar) continue;
    vars.push_back(static_cast<int>(v));
    int n = vt.discrete_cardinality(static_cast<int>(v));
    counts.push_back(n);
    product *= static_cast<std::uint64_t>(n);
    if (product > opts.cap) {
      throw CapExceededError(
          "assignment space exceeds the enumeration cap; specify the rules "
          "directly with the builder API");
    }
  }

  Assignment base = make_default_assignment(spec);
  std::vector<TransitionRule> rules;
  std::set<RuleKey> seen;

  std::vector<int> odo(vars.size(), 0);
  bool done = false;
  while (!done) {
    Assignment a = base;
    for (size_t i = 0; i < vars.size(); ++i) {
      int v = vars[i];
      int proper =
          counts[i] - (vt.entries[static_cast<size_t>(v)].is_head_output ? 1 : 0);
      a.values[v] = odo[i] < proper ? vt.value_from_discrete(v, odo[i])
                                    : Value::null();
    }
    bool use = !opts.filter || opts.filter(a, vt);
    if (use) {
      bool skipped = false;
      FfnView view1(spec, a);
      try {
        ffn(view1);
      } catch (const FfnView::SkipAssignment&) {
        skipped = true;
      }
      if (!skipped) {
        Assignment a2 = a;
        FfnView view2(spec, a2);
        try {
          ffn(view2);
        } catch (const FfnView::SkipAssignment&) {
          throw NonDeterministicFfnError("second evaluation aborted");
        }
        if (view1.writes() != view2.writes() ||
            view1.reads() != view2.reads()) {
          throw NonDeterministicFfnError(
              "two evaluations of one assignment differ");
        }
        for (int v : view1.reads()) {
          if (excluded.count(vt.entries[v].name)) {
            throw EnumerateError("ffn reads excluded variable " +
                                 vt.entries[v].name);
          }
        }
        for (const auto& [wv, wval] : view1.writes()) {
          int old_id = vt.discrete_from_value(wv, a.values[wv]);
          int new_id = wval.is_null() ? TransitionRule::kNullValue
                                      : vt.discrete_from_value(wv, wval);
          if (!wval.is_null() && new_id < 0) {
            throw EnumerateError("ffn wrote unrepresentable value " +
                                 wval.str() + " to " + vt.entries[wv].name);
          }
          if (old_id < 0) {
            // Writing over Null: only expressible as a reset, which the
            // framework generates itself.
            throw EnumerateError("ffn wrote to " + vt.entries[wv].name +
                                 " while it was null");
          }
          if (new_id == old_id) continue;
          TransitionRule r;
          for (int rv : view1.reads()) {
            const Value& val = a.values[rv];
            if (!val.is_defined()) continue;  // null reads are don't-cares
            r.antecedent.push_back(
                {vt.entries[rv].name, vt.discrete_from_value(rv, val)});
          }
          bool has_out = false;
          for (const auto& c : r.antecedent) {
            if (c.var == vt.entries[wv].name) has_out = true;
          }
          if (!has_out) {
            r.antecedent.push_back({vt.entries[wv].name, old_id});
          }
          r.output_var = vt.entries[wv].name;
          r.old_value = old_id;
          r.new_value = new_id;
          r.is_reset = false;
          normalize(r, vt);
          RuleKey k = key_of(r);
          if (seen.insert(k).second) rules.push_back(std::move(r));
        }
      }
    }
    int i = static_cast<int>(vars.size()) - 1;
    while (i >= 0) {
      if (++odo[i] < counts[i]) break;
      odo[i] = 0;
      --i;
    }
    if (i < 0) done = true;
  }

  if (opts.merge) covering_merge(rules, vt);

  // Subsumption: a rule whose antecedent contains another rule's antecedent
  // with the same consequent is redundant; with a different consequent the
  // function cannot be expressed as an exclusive rule set.
  std::vector<bool> dead(rules.size(), false);
  for (size_t i = 0; i < rules.size(); ++i) {
    for (size_t j = 0; j < rules.size(); ++j) {
      if (i == j || dead[i] || dead[j]) continue;
      if (rules[i].output_var != rules[j].output_var) continue;
      if (antecedent_subset(rules[i], rules[j])) {
        if (rules[i].old_value == rules[j].old_value &&
            rules[i].new_value == rules[j].new_value) {
          dead[j] = true;
        } else if (rules[i].antecedent.size() < rules[j].antecedent.size()) {
          throw EnumerateError(
              "function behavior under null values conflicts with rule '" +
              rules[j].output_var + "'; restructure the function");
        }
      }
    }
  }
  std::vector<TransitionRule> out;
  for (size_t i = 0; i < rules.size(); ++i) {
    if (!dead[i]) out.push_back(rules[i]);
  }
  return out;
}

namespace {

// Applies one prepared rule set to a single position's assignment.
// `candidates` restricts the scan (nullptr means all rules).
void apply_prepared(const ProgramSpec& spec,
                    const std::vector<PreparedRule>& prepared,
                    const std::vector<int>* candidates, const Assignment& in,
                    Assignment& out, std::vector<int>& writer) {
  const VarTable& vt = spec.var_table();
  writer.assign(vt.entries.size(), -1);
  size_t count = candidates ? candidates->size() : prepared.size();
  for (size_t idx = 0; idx < count; ++idx) {
    int ri = candidates ? (*candidates)[idx] : static_cast<int>(idx);
    const PreparedRule& r = prepared[ri];
    bool sat = true;
    bool pending_ambiguous = false;
    for (const auto& [v, id] : r.constraints) {
      MatchState st = constraint_state(vt.entries[v], in.values[v], id);
      if (st == MatchState::Mismatch) {
        sat = false;
        break;
      }
      if (st == MatchState::Ambiguous) pending_ambiguous = true;
    }
    if (!sat) continue;
    if (pending_ambiguous) {
      throw UndefinedReadError(
          "rule for '" + vt.entries[r.out_var].name +
          "' is decided by an ambiguous attention output");
    }
    if (writer[r.out_var] >= 0) {
      throw RuleConflictError("rules #" + std::to_string(writer[r.out_var]) +
                              " and #" + std::to_string(ri) +
                              " both write '" + vt.entries[r.out_var].name +
                              "'");
    }
    writer[r.out_var] = ri;
    out.values[r.out_var] = r.new_value == TransitionRule::kNullValue
                                ? Value::null()
                                : vt.value_from_discrete(r.out_var,
                                                         r.new_value);
  }
}

std::vector<PreparedRule> prepare_rules(const ProgramSpec& spec,
                                        const std::vector<TransitionRule>& rules) {
  const VarTable& vt = spec.var_table();
  std::vector<PreparedRule> out;
  out.reserve(rules.size());
  for (const auto& r : rules) {
    PreparedRule pr;
    for (const auto& c : r.antecedent) {
      pr.constraints.push_back({vt.find(c.var), c.value});
    }
    pr.out_var = vt.find(r.output_var);
    pr.new_value = r.new_value;
    out.push_back(std::move(pr));
  }
  return out;
}

}  // namespace

Assignment apply_rules(const ProgramSpec& spec,
                       const std::vector<TransitionRule>& rules,
                       const Assignment& a) {
  Assignment out = a;
  std::vector<int> writer;
  if (&rules == &spec.rules) {
    apply_prepared(spec, spec.prepared_rules(), nullptr, a, out, writer);
  } else {
    std::vector<PreparedRule> prepared = prepare_rules(spec, rules);
    apply_prepared(spec, prepared, nullptr, a, out, writer);
  }
  return out;
}

bool check_rule_exclusivity(const ProgramSpec& spec, std::uint64_t cap,
                            std::string* witness) {
  const VarTable& vt = spec.var_table();
  std::uint64_t product = 1;
  std::vector<int> counts;
  for (size_t v = 0; v < vt.entries.size(); ++v) {
    int n = vt.discrete_cardinality(static_cast<int>(v));
    counts.push_back(n);
    product *= static_cast<std::uint64_t>(n);
    if (product > cap) {
      throw CapExceededError("assignment space exceeds the exclusivity cap");
    }
  }
  std::vector<int> odo(vt.entries.size(), 0);
  Assignment a = make_default_assignment(spec);
  bool done = vt.entries.empty();
  while (!done) {
    for (size_t v = 0; v < vt.entries.size(); ++v) {
      int proper = counts[v] - (vt.entries[v].is_head_output ? 1 : 0);
      a.values[v] = odo[v] < proper
                        ? vt.value_from_discrete(static_cast<int>(v), odo[v])
                        : Value::null();
    }
    std::vector<int> writer(vt.entries.size(), -1);
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
      if (!sat) continue;
      int ov = vt.find(r.output_var);
      if (writer[ov] >= 0) {
        if (witness) {
          *witness = "rules #" + std::to_string(writer[ov]) + " and #" +
                     std::to_string(ri) + " on '" + r.output_var + "'";
        }
        return false;
      }
      writer[ov] = static_cast<int>(ri);
    }
    int i = static_cast<int>(vt.entries.size()) - 1;
    while (i >= 0) {
      if (++odo[i] < counts[i]) break;
      odo[i] = 0;
      --i;
    }
    if (i < 0) done = true;
  }
  return true;
}

}  // namespace loom
