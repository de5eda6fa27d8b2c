#include "loom/value.hpp"

#include <algorithm>
#include <sstream>

namespace loom {

Value Value::set(std::vector<int> elems) {
  std::sort(elems.begin(), elems.end());
  elems.erase(std::unique(elems.begin(), elems.end()), elems.end());
  Value v;
  v.kind_ = Kind::Set;
  v.set_ = std::move(elems);
  return v;
}

bool Value::operator==(const Value& o) const {
  if (kind_ != o.kind_) return false;
  switch (kind_) {
    case Kind::Null:
      return true;
    case Kind::Undefined:
      return ambiguous_ == o.ambiguous_;
    case Kind::Cat:
      return cat_ == o.cat_;
    case Kind::Num:
      return num_ == o.num_;
    case Kind::Set:
      return set_ == o.set_;
  }
  return false;
}

std::string Value::str() const {
  switch (kind_) {
    case Kind::Null:
      return "null";
    case Kind::Undefined:
      return ambiguous_ ? "undefined(ambiguous)" : "undefined";
    case Kind::Cat:
      return std::to_string(cat_);
    case Kind::Num: {
      std::ostringstream os;
      os << num_;
      return os.str();
    }
    case Kind::Set: {
      std::ostringstream os;
      os << "{";
      for (size_t i = 0; i < set_.size(); ++i) {
        if (i) os << ",";
        os << set_[i];
      }
      os << "}";
      return os.str();
    }
  }
  return "?";
}

void Value::require(Kind k) const {
  if (kind_ != k) {
    throw std::logic_error("value kind mismatch: have " + str());
  }
}

}  // namespace loom
