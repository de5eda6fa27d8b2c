#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace loom {

// A symbolic value held by one variable at one sequence position.
//
// Attention-output variables additionally take Null (the all-zeros
// activation pattern) and Undefined. Undefined comes in two flavors that
// behave differently when read:
//   - empty:     nothing was selected by an attention head. A compiled model
//                produces a (numerically) zero block here, so rule matching
//                treats it exactly like Null.
//   - ambiguous: a categorical aggregate selected more than one position.
//                A compiled model produces a fractional mixture here, which
//                no rule set can emulate, so a read that would decide a rule
//                raises UndefinedReadError.
class Value {
 public:
  enum class Kind : std::uint8_t { Null, Undefined, Cat, Num, Set };

  Value() = default;

  static Value null() { return Value(); }
  static Value undefined_empty() {
    Value v;
    v.kind_ = Kind::Undefined;
    v.ambiguous_ = false;
    return v;
  }
  static Value undefined_ambiguous() {
    Value v;
    v.kind_ = Kind::Undefined;
    v.ambiguous_ = true;
    return v;
  }
  static Value cat(int id) {
    Value v;
    v.kind_ = Kind::Cat;
    v.cat_ = id;
    return v;
  }
  static Value num(double x) {
    Value v;
    v.kind_ = Kind::Num;
    v.num_ = x;
    return v;
  }
  static Value set(std::vector<int> elems);  // sorts and dedups

  Kind kind() const { return kind_; }
  bool is_null() const { return kind_ == Kind::Null; }
  bool is_undefined() const { return kind_ == Kind::Undefined; }
  bool is_ambiguous() const { return kind_ == Kind::Undefined && ambiguous_; }
  bool is_empty_undefined() const {
    return kind_ == Kind::Undefined && !ambiguous_;
  }
  bool is_defined() const {
    return kind_ == Kind::Cat || kind_ == Kind::Num || kind_ == Kind::Set;
  }

  int cat_id() const {
    require(Kind::Cat);
    return cat_;
  }
  double num_value() const {
    require(Kind::Num);
    return num_;
  }
  const std::vector<int>& set_elems() const {
    require(Kind::Set);
    return set_;
  }

  bool operator==(const Value& o) const;
  bool operator!=(const Value& o) const { return !(*this == o); }

  std::string str() const;

 private:
  void require(Kind k) const;

  Kind kind_ = Kind::Null;
  bool ambiguous_ = false;
  int cat_ = 0;
  double num_ = 0.0;
  std::vector<int> set_;
};

// Raised when an ambiguous undefined value would decide an operation.
struct UndefinedReadError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised when two satisfied rules write the same variable at one position.
struct RuleConflictError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace loom
