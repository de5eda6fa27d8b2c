#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "loom/value.hpp"

namespace loom {

enum class VarKind : std::uint8_t { Categorical, Numerical, SetVar };

// How a variable gets its value at position i with input token x.
struct VarInit {
  enum class Kind : std::uint8_t { None, Input, Position, Constant };
  Kind kind = Kind::None;
  // Lookup tables over [0, input_range) / [0, position_range). Materialized
  // from init callables when the program is assembled; entries outside the
  // observed id set are replaced by the variable default when minimizing.
  std::vector<Value> table;
  Value constant;

  static VarInit none() { return {}; }
  static VarInit input_table(std::vector<Value> t) {
    VarInit v;
    v.kind = Kind::Input;
    v.table = std::move(t);
    return v;
  }
  static VarInit position_table(std::vector<Value> t) {
    VarInit v;
    v.kind = Kind::Position;
    v.table = std::move(t);
    return v;
  }
  static VarInit constant_value(Value c) {
    VarInit v;
    v.kind = Kind::Constant;
    v.constant = std::move(c);
    return v;
  }
};

struct VariableSpec {
  std::string name;
  VarKind kind = VarKind::Categorical;
  int range = 0;                               // categorical
  std::vector<double> buckets;                 // numerical, strictly increasing
  int universe_range = 0;                      // set
  std::vector<std::vector<int>> allowed_sets;  // set, each sorted
  VarInit init;
  Value default_value;  // used when an init fn is absent or out of domain

  static VariableSpec categorical(std::string name, int range,
                                  VarInit init = VarInit::none(),
                                  std::optional<Value> dflt = std::nullopt);
  static VariableSpec numerical(std::string name, std::vector<double> buckets,
                                VarInit init = VarInit::none(),
                                std::optional<Value> dflt = std::nullopt);
  static VariableSpec set_var(std::string name, int universe_range,
                              std::vector<std::vector<int>> allowed_sets,
                              VarInit init = VarInit::none(),
                              std::optional<Value> dflt = std::nullopt);
};

struct AttentionHeadSpec {
  std::string name;  // also the output variable name
  std::string query;
  std::string key;
  std::string value;
  VarKind output_kind = VarKind::Categorical;
  int output_range = 0;                // categorical output
  std::vector<double> output_buckets;  // numerical output
  std::optional<std::set<int>> relative_mask;

  static AttentionHeadSpec qkv(std::string name, std::string query,
                               std::string key, std::string value);
  // Head that reads `value` at a fixed relative offset. Query and key use the
  // shared single-valued constant variable.
  static AttentionHeadSpec relative(std::string name, std::string value,
                                    int offset);
};

// One antecedent constraint: variable = discrete value id.
// For categorical vars the id is the value; for numerical vars it is a
// bucket index; for set vars it is an index into allowed_sets.
struct Constraint {
  std::string var;
  int value = 0;
  bool operator==(const Constraint& o) const {
    return var == o.var && value == o.value;
  }
};

struct TransitionRule {
  std::vector<Constraint> antecedent;
  std::string output_var;
  int old_value = 0;  // discrete id; must appear in the antecedent
  // Discrete id, or kNullValue for attention-output resets.
  int new_value = 0;
  bool is_reset = false;

  static constexpr int kNullValue = -1;
  bool operator==(const TransitionRule& o) const {
    return antecedent == o.antecedent && output_var == o.output_var &&
           old_value == o.old_value && new_value == o.new_value &&
           is_reset == o.is_reset;
  }
};

struct HaltSpec {
  std::string var;
  int value = 0;
};

// Flat view over declared variables followed by head-output variables, in
// declaration order. This order also fixes the activation layout.
struct VarTable {
  struct Entry {
    std::string name;
    VarKind kind = VarKind::Categorical;
    int range = 0;
    std::vector<double> buckets;
    int universe_range = 0;
    std::vector<std::vector<int>> allowed_sets;
    bool is_head_output = false;
    VarInit init;  // head outputs have none
    Value default_value;
  };

  std::vector<Entry> entries;
  std::unordered_map<std::string, int> index;

  int find(const std::string& name) const {
    auto it = index.find(name);
    return it == index.end() ? -1 : it->second;
  }
  const Entry& at(const std::string& name) const;

  // Number of discrete states enumerable for this variable (head outputs
  // include the extra Null state).
  int discrete_cardinality(int var) const;
  // Maps a discrete id (or the Null slot for head outputs) to a Value.
  Value value_from_discrete(int var, int id) const;
  // Inverse for defined values; numerical values snap to the nearest bucket
  // with ties toward the lower bucket. Returns -1 for Null/Undefined.
  int discrete_from_value(int var, const Value& v) const;
};

// Rules lowered to variable indices and discrete value ids for matching.
struct PreparedRule {
  std::vector<std::pair<int, int>> constraints;  // (var index, value id)
  int out_var = 0;
  int new_value = 0;  // TransitionRule::kNullValue for resets
};

struct ProgramSpec {
  std::vector<VariableSpec> variables;
  std::vector<AttentionHeadSpec> heads;
  std::vector<TransitionRule> rules;
  std::string output_var;
  std::optional<HaltSpec> halt;
  int input_range = 0;
  std::optional<int> position_range;
  // Layers to run when the caller does not override max_layers. Programs
  // without a halt spec that stabilize after k layers set this to k.
  std::optional<int> default_max_layers;

  const VarTable& var_table() const;  // built lazily, cached
  const std::vector<PreparedRule>& prepared_rules() const;
  void invalidate_cache() {
    table_.reset();
    prepared_.reset();
  }

  int head_index(const std::string& name) const;

 private:
  mutable std::shared_ptr<VarTable> table_;
  mutable std::shared_ptr<std::vector<PreparedRule>> prepared_;
};

// The shared query/key variable implicitly declared by relative heads.
inline constexpr const char* kRelativeConstVar = "__const";

// Ensures the implicit constant variable exists if any head is relative.
void finalize_variables(ProgramSpec& spec);

// Appends one reset rule per attainable value of every attention-output
// variable. Idempotent.
ProgramSpec add_reset_rules(ProgramSpec spec);

// Nearest bucket for a scalar; ties break toward the lower bucket.
int nearest_bucket(const std::vector<double>& buckets, double x);

enum class MatchState : std::uint8_t { Mismatch, Match, Ambiguous };

// How a stored value relates to an antecedent constraint. Null and empty
// values never match (their activation encoding is all zeros); ambiguous
// values are reported so a decisive read can raise.
inline MatchState constraint_state(const VarTable::Entry& e, const Value& v,
                                   int id) {
  switch (v.kind()) {
    case Value::Kind::Cat:
      return v.cat_id() == id ? MatchState::Match : MatchState::Mismatch;
    case Value::Kind::Num:
      return nearest_bucket(e.buckets, v.num_value()) == id
                 ? MatchState::Match
                 : MatchState::Mismatch;
    case Value::Kind::Set: {
      if (id < 0 || id >= static_cast<int>(e.allowed_sets.size())) {
        return MatchState::Mismatch;
      }
      return e.allowed_sets[id] == v.set_elems() ? MatchState::Match
                                                 : MatchState::Mismatch;
    }
    case Value::Kind::Undefined:
      return v.is_ambiguous() ? MatchState::Ambiguous : MatchState::Mismatch;
    case Value::Kind::Null:
      return MatchState::Mismatch;
  }
  return MatchState::Mismatch;
}

}  // namespace loom
