#include "loom/layout.hpp"

namespace loom {

Assignment make_default_assignment(const ProgramSpec& spec) {
  const VarTable& vt = spec.var_table();
  Assignment a;
  a.values.reserve(vt.entries.size());
  for (const auto& e : vt.entries) {
    a.values.push_back(e.is_head_output ? Value::null() : e.default_value);
  }
  return a;
}

VarLayout::VarLayout(const ProgramSpec& spec) : vt_(&spec.var_table()) {
  offsets_.reserve(vt_->entries.size());
  widths_.reserve(vt_->entries.size());
  for (const auto& e : vt_->entries) {
    int w = 0;
    switch (e.kind) {
      case VarKind::Categorical:
        w = e.range;
        break;
      case VarKind::Numerical:
        w = 1;
        break;
      case VarKind::SetVar:
        w = e.universe_range;
        break;
    }
    offsets_.push_back(d_model_);
    widths_.push_back(w);
    d_model_ += w;
  }
}

int VarLayout::slot(const std::string& var, int value_id) const {
  return slot(vt_->find(var), value_id);
}

int VarLayout::slot(int var, int value_id) const {
  if (var < 0) throw std::logic_error("slot: unknown variable");
  const auto& e = vt_->entries[var];
  if (e.kind == VarKind::Numerical) {
    throw std::logic_error("slot: " + e.name + " is numerical");
  }
  if (value_id < 0 || value_id >= widths_[var]) {
    throw std::logic_error("slot: value id out of range for " + e.name);
  }
  return offsets_[var] + value_id;
}

int VarLayout::scalar_slot(const std::string& var) const {
  return scalar_slot(vt_->find(var));
}

int VarLayout::scalar_slot(int var) const {
  if (var < 0) throw std::logic_error("scalar_slot: unknown variable");
  if (vt_->entries[var].kind != VarKind::Numerical) {
    throw std::logic_error("scalar_slot: " + vt_->entries[var].name +
                           " is not numerical");
  }
  return offsets_[var];
}

std::pair<int, int> VarLayout::inverse(int dim) const {
  for (int v = 0; v < static_cast<int>(offsets_.size()); ++v) {
    if (dim >= offsets_[v] && dim < offsets_[v] + widths_[v]) {
      if (vt_->entries[v].kind == VarKind::Numerical) return {v, -1};
      return {v, dim - offsets_[v]};
    }
  }
  throw std::logic_error("inverse: dimension out of range");
}

Eigen::VectorXd VarLayout::encode(const Assignment& a,
                                  const VarTable& vt) const {
  Eigen::VectorXd z = Eigen::VectorXd::Zero(d_model_);
  for (size_t v = 0; v < a.values.size(); ++v) {
    const Value& val = a.values[v];
    const auto& e = vt.entries[v];
    if (val.is_null() || val.is_empty_undefined()) continue;
    if (val.is_ambiguous()) {
      throw UndefinedReadError("cannot encode ambiguous value of " + e.name);
    }
    switch (e.kind) {
      case VarKind::Categorical:
        z[offsets_[v] + val.cat_id()] = 1.0;
        break;
      case VarKind::Numerical:
        z[offsets_[v]] = val.num_value();
        break;
      case VarKind::SetVar:
        for (int elem : val.set_elems()) z[offsets_[v] + elem] = 1.0;
        break;
    }
  }
  return z;
}

Assignment VarLayout::decode(const Eigen::VectorXd& z,
                             const VarTable& vt) const {
  Assignment a;
  a.values.resize(vt.entries.size(), Value::null());
  for (size_t v = 0; v < vt.entries.size(); ++v) {
    const auto& e = vt.entries[v];
    int off = offsets_[v];
    switch (e.kind) {
      case VarKind::Numerical: {
        double x = z[off];
        if (e.is_head_output && x == 0.0) {
          a.values[v] = Value::null();
        } else {
          a.values[v] = Value::num(x);
        }
        break;
      }
      case VarKind::Categorical: {
        int active = -1;
        int count = 0;
        for (int i = 0; i < widths_[v]; ++i) {
          if (z[off + i] > 0.5) {
            active = i;
            ++count;
          }
        }
        if (count == 1) {
          a.values[v] = Value::cat(active);
        } else if (count == 0) {
          a.values[v] = Value::null();
        } else {
          a.values[v] = Value::undefined_ambiguous();
        }
        break;
      }
      case VarKind::SetVar: {
        std::vector<int> elems;
        for (int i = 0; i < widths_[v]; ++i) {
          if (z[off + i] > 0.5) elems.push_back(i);
        }
        a.values[v] = elems.empty() ? Value::null() : Value::set(elems);
        break;
      }
    }
  }
  return a;
}

}  // namespace loom
