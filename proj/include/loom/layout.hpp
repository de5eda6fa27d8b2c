#pragma once

#include <Eigen/Dense>

#include "loom/program.hpp"

namespace loom {

// Variable assignments for one sequence position, indexed per VarTable order.
struct Assignment {
  std::vector<Value> values;

  bool operator==(const Assignment& o) const { return values == o.values; }
};

Assignment make_default_assignment(const ProgramSpec& spec);

// Bijective map between variable values and activation dimensions.
//
// Blocks appear in VarTable order (declared variables, then head outputs).
// Categorical variables take one dimension per value, set variables one per
// universe element, numerical variables a single raw-scalar dimension.
class VarLayout {
 public:
  explicit VarLayout(const ProgramSpec& spec);

  int d_model() const { return d_model_; }
  int var_offset(int var) const { return offsets_[var]; }
  int var_width(int var) const { return widths_[var]; }
  int num_vars() const { return static_cast<int>(offsets_.size()); }

  // Dimension of a categorical value / set element indicator.
  int slot(const std::string& var, int value_id) const;
  int slot(int var, int value_id) const;
  // Dimension holding a numerical variable's raw scalar.
  int scalar_slot(const std::string& var) const;
  int scalar_slot(int var) const;

  // Inverse map: dimension -> (variable index, value id or -1 for scalar).
  std::pair<int, int> inverse(int dim) const;

  Eigen::VectorXd encode(const Assignment& a, const VarTable& vt) const;
  // Threshold-0.5 decoding. Undefined never decodes; all-zero categorical or
  // set blocks and zero numerical head outputs decode to Null.
  Assignment decode(const Eigen::VectorXd& z, const VarTable& vt) const;

 private:
  const VarTable* vt_;
  int d_model_ = 0;
  std::vector<int> offsets_;
  std::vector<int> widths_;
};

}  // namespace loom
