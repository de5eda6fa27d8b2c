#pragma once

#include <cstdint>
#include <functional>

#include "loom/layout.hpp"
#include "loom/program.hpp"

namespace loom {

struct CapExceededError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NonDeterministicFfnError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EnumerateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Read/write window over one assignment handed to an MLP function.
// Reads are tracked so the emitted rule's antecedent covers exactly the
// variables the function looked at.
class FfnView {
 public:
  FfnView(const ProgramSpec& spec, Assignment& a);

  // Raw read. Legal on every value.
  const Value& value(const std::string& name);
  // True iff the variable currently holds the given categorical id /
  // bucketed scalar. False (without error) on Null and undefined values.
  bool eq(const std::string& name, int cat_id);
  bool is_null(const std::string& name);
  bool is_defined(const std::string& name);
  // Scalar reads. Reading Null or undefined aborts the assignment: during
  // enumeration the assignment is skipped, during direct evaluation the
  // error propagates.
  int cat(const std::string& name);
  double num(const std::string& name);

  void set(const std::string& name, int cat_id);
  void set(const std::string& name, const Value& v);

  const std::vector<int>& reads() const { return reads_; }
  const std::vector<std::pair<int, Value>>& writes() const { return writes_; }

  struct SkipAssignment {};

 private:
  int lookup(const std::string& name);

  const VarTable& vt_;
  Assignment& a_;
  Assignment pending_;  // writes land here; reads see the original state
  std::vector<int> reads_;
  std::vector<bool> read_mask_;
  std::vector<std::pair<int, Value>> writes_;

  friend std::vector<TransitionRule> enumerate_rules(
      const ProgramSpec&, const std::function<void(FfnView&)>&,
      const struct EnumerateOptions&);
};

using FfnFn = std::function<void(FfnView&)>;

struct EnumerateOptions {
  // Scope hints: variables excluded from enumeration (held at default).
  // Reading one from the ffn is an error.
  std::vector<std::string> excluded;
  // Optional restriction of the enumerated assignment space.
  std::function<bool(const Assignment&, const VarTable&)> filter;
  std::uint64_t cap = std::uint64_t{1} << 22;
  // Covering-merge simplification: drop an antecedent constraint when rules
  // exist for every proper value of that variable with identical consequent
  // (the Null state of attention outputs is a don't-care).
  bool merge = true;
};

// Derives the transition-rule set by running `ffn` on every enumerable
// assignment. Each emitted rule's antecedent is the set of variables the
// function read (plus the output variable), bound to that assignment's
// values. Assignments aborted by a scalar read of Null/undefined are
// skipped. Deterministic: the function is evaluated twice per assignment.
std::vector<TransitionRule> enumerate_rules(const ProgramSpec& spec,
                                            const FfnFn& ffn,
                                            const EnumerateOptions& opts = {});

// Applies `rules` to one assignment (the interpreter MLP semantics, exposed
// for rule/ffn equivalence checks). Also used by mlp_step internally.
Assignment apply_rules(const ProgramSpec& spec,
                       const std::vector<TransitionRule>& rules,
                       const Assignment& a);

// Exhaustive exclusivity check: true iff no two rules sharing an output
// variable are satisfied by any enumerable assignment. Throws CapExceeded
// when the space is too large.
bool check_rule_exclusivity(const ProgramSpec& spec, std::uint64_t cap,
                            std::string* witness = nullptr);

}  // namespace loom
