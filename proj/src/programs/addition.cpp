#include <algorithm>
#include <stdexcept>

#include "loom/builder.hpp"
#include "loom/programs.hpp"
#include "loom/validate.hpp"

namespace loom {

namespace {

constexpr int kStart = AdditionTokens::kStart;
constexpr int kAdd = AdditionTokens::kAdd;
constexpr int kEnd = AdditionTokens::kEnd;
constexpr int kPad = AdditionTokens::kPad;
constexpr int kInputRange = 13;

enum Step { kStepInit = 0, kStepIterate = 1, kStepDone = 2 };

}  // namespace

// Sequence layout: START a_1..a_N + b_1..b_N END, operands padded to equal
// length. Pointers are per-position booleans that shift left one cell per
// iteration; the digit pointers are read through attention with a constant
// query. One digit is produced per layer, so a sum of N-digit operands
// halts after N+2 layers.
ProgramSpec addition_program() {
  ProgramSpec spec;
  spec.input_range = kInputRange;

  std::vector<Value> token_init;
  for (int x = 0; x < kInputRange; ++x) token_init.push_back(Value::cat(x));
  spec.variables = {
      VariableSpec::categorical("token", kInputRange,
                                VarInit::input_table(token_init)),
      VariableSpec::categorical("step", 3),
      VariableSpec::categorical("ptr_a", 2),
      VariableSpec::categorical("ptr_b", 2),
      VariableSpec::categorical("ptr_out", 2),
      VariableSpec::categorical("value_carry", 2),
      VariableSpec::categorical("value_out", 11, VarInit::none(),
                                Value::cat(kPad)),
      VariableSpec::categorical("one", 2, VarInit::none(), Value::cat(1)),
  };
  spec.heads = {
      AttentionHeadSpec::relative("token_right", "token", 1),
      AttentionHeadSpec::relative("ptr_a_right", "ptr_a", 1),
      AttentionHeadSpec::relative("ptr_b_right", "ptr_b", 1),
      AttentionHeadSpec::relative("ptr_out_right", "ptr_out", 1),
      AttentionHeadSpec::qkv("ptr_a_token", "one", "ptr_a", "token"),
      AttentionHeadSpec::qkv("ptr_b_token", "one", "ptr_b", "token"),
  };
  finalize_variables(spec);

  RuleBuilder b(spec);
  b.get("step", [&](const Value& step) {
    switch (step.cat_id()) {
      case kStepInit: {
        b.set("step", kStepIterate);
        b.get("token_right", [&](const Value& tr) {
          if (tr.cat_id() == kEnd) {
            b.get("ptr_b", [&](const Value&) { b.set("ptr_b", 1); });
            b.get("ptr_out", [&](const Value&) { b.set("ptr_out", 1); });
          } else if (tr.cat_id() == kAdd) {
            b.get("ptr_a", [&](const Value&) { b.set("ptr_a", 1); });
          }
        });
        break;
      }
      case kStepIterate: {
        b.get("ptr_a_token", [&](const Value& at) {
          if (at.cat_id() == kStart) {
            // Write the final carry if there is one, then halt.
            b.set("step", kStepDone);
            b.get("ptr_out", [&](const Value& po) {
              if (po.cat_id() != 1) return;
              b.get({"value_carry", "value_out"},
                    [&](const std::vector<Value>& t) {
                      if (t[0].cat_id() == 1 && t[1].cat_id() == kPad) {
                        b.set("value_out", 1);
                      }
                    });
            });
          } else if (at.cat_id() <= 9) {
            b.get({"ptr_b_token", "value_carry"},
                  [&](const std::vector<Value>& t) {
                    int bt = t[0].cat_id();
                    if (bt > 9) return;  // operands have equal length
                    int raw = t[1].cat_id() + at.cat_id() + bt;
                    b.get("ptr_out", [&](const Value& po) {
                      if (po.cat_id() != 1) return;
                      b.get("value_out", [&](const Value& vo) {
                        if (vo.cat_id() == kPad) {
                          b.set("value_out", raw % 10);
                        }
                      });
                    });
                    b.set("value_carry", raw / 10);
                  });
          }
        });
        // Shift all pointers one cell to the left. The END position's
        // relative heads select nothing, which leaves it unchanged.
        for (const char* ptr : {"ptr_a", "ptr_b", "ptr_out"}) {
          std::string right = std::string(ptr) + "_right";
          b.get({std::string(ptr), right},
                [&](const std::vector<Value>& t) {
                  b.set(ptr, t[1].cat_id());
                });
        }
        break;
      }
      default:
        break;
    }
  });
  spec.rules = b.take_rules();
  spec.output_var = "value_out";
  spec.halt = HaltSpec{"step", kStepDone};
  spec = add_reset_rules(std::move(spec));
  require_valid(spec);
  return spec;
}

std::vector<int> addition_tokenize(const std::string& text) {
  auto plus = text.find('+');
  if (plus == std::string::npos) {
    throw std::invalid_argument("addition input must look like '123+45'");
  }
  auto digits = [](const std::string& s) {
    std::vector<int> out;
    for (char c : s) {
      if (c == ' ') continue;
      if (c < '0' || c > '9') {
        throw std::invalid_argument("bad digit in addition input");
      }
      out.push_back(c - '0');
    }
    if (out.empty()) throw std::invalid_argument("empty addition operand");
    return out;
  };
  std::vector<int> a = digits(text.substr(0, plus));
  std::vector<int> b = digits(text.substr(plus + 1));
  // Pad the shorter operand with leading zeros; the pointer walk expects
  // operands of equal length.
  size_t n = std::max(a.size(), b.size());
  while (a.size() < n) a.insert(a.begin(), 0);
  while (b.size() < n) b.insert(b.begin(), 0);
  std::vector<int> ids;
  ids.push_back(kStart);
  ids.insert(ids.end(), a.begin(), a.end());
  ids.push_back(kAdd);
  ids.insert(ids.end(), b.begin(), b.end());
  ids.push_back(kEnd);
  return ids;
}

std::string addition_decode_output(const std::vector<int>& output_ids) {
  std::string out;
  for (int v : output_ids) {
    if (v >= 0 && v <= 9) out.push_back(static_cast<char>('0' + v));
  }
  // Strip leading zeros but keep a lone zero.
  size_t nz = out.find_first_not_of('0');
  if (nz == std::string::npos) return out.empty() ? "" : "0";
  return out.substr(nz);
}

}  // namespace loom
