#pragma once

#include <functional>
#include <string>
#include <vector>

#include "loom/program.hpp"

namespace loom {

struct BuilderError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Direct transition-rule authoring. `get` iterates the Cartesian product of
// the named variables' discrete values, pushing each combination into the
// antecedent scope for the duration of the visitor; `set` emits one rule
// whose antecedent is exactly the current scope. Setting a value equal to
// the scoped current value emits nothing.
class RuleBuilder {
 public:
  explicit RuleBuilder(const ProgramSpec& spec);

  using Visitor = std::function<void(const std::vector<Value>&)>;

  void get(const std::vector<std::string>& vars, const Visitor& body);
  // Single-variable convenience.
  void get(const std::string& var, const std::function<void(const Value&)>& body);

  void set(const std::string& var, const Value& new_value);
  void set(const std::string& var, int cat_value);
  void set_null(const std::string& var);

  const std::vector<TransitionRule>& rules() const { return rules_; }
  std::vector<TransitionRule> take_rules() { return std::move(rules_); }

 private:
  struct Binding {
    int var;
    int value;  // discrete id
  };

  void emit(int var, int new_value);

  const ProgramSpec& spec_;
  const VarTable& vt_;
  std::vector<Binding> scope_;
  std::vector<TransitionRule> rules_;
};

}  // namespace loom
