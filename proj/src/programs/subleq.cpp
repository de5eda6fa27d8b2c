#include "loom/builder.hpp"
#include "loom/programs.hpp"
#include "loom/validate.hpp"

namespace loom {

namespace {

constexpr int kMin = SubleqMachine::kMin;
constexpr int kMax = SubleqMachine::kMax;
constexpr int kMemRange = SubleqMachine::kMemRange;
constexpr int kNumPositions = 11;  // encoded addresses stay within range

enum State { kState1 = 0, kState2 = 1, kState3 = 2, kStateDone = 3 };

bool valid_address(int encoded) { return SubleqMachine::decode(encoded) >= 0; }

}  // namespace

// Each position holds one register. An instruction (a, b, c) starting at the
// program counter executes in three layers: operand fetch and validity
// check, subtract-and-store at address b, then branch. Memory and program
// share the register file, so stores into upcoming instructions take effect.
ProgramSpec subleq_program() {
  ProgramSpec spec;
  spec.input_range = kMemRange;
  spec.position_range = kNumPositions;

  std::vector<Value> mem_init;
  for (int x = 0; x < kMemRange; ++x) mem_init.push_back(Value::cat(x));
  std::vector<Value> pos_init;
  for (int i = 0; i < kNumPositions; ++i) {
    pos_init.push_back(Value::cat(SubleqMachine::encode(i)));
  }
  auto enc = [](int v) { return Value::cat(SubleqMachine::encode(v)); };
  spec.variables = {
      VariableSpec::categorical("mem", kMemRange,
                                VarInit::input_table(mem_init)),
      VariableSpec::categorical("pos", kMemRange,
                                VarInit::position_table(pos_init)),
      VariableSpec::categorical("pos_a", kMemRange, VarInit::none(), enc(0)),
      VariableSpec::categorical("pos_b", kMemRange, VarInit::none(), enc(1)),
      VariableSpec::categorical("pos_c", kMemRange, VarInit::none(), enc(2)),
      VariableSpec::categorical("reg_a", kMemRange, VarInit::none(),
                                Value::cat(0)),
      VariableSpec::categorical("reg_b", kMemRange, VarInit::none(),
                                Value::cat(0)),
      VariableSpec::categorical("state", 4),
      VariableSpec::categorical("jump", 2),
  };
  spec.heads = {
      AttentionHeadSpec::qkv("a", "pos_a", "pos", "mem"),
      AttentionHeadSpec::qkv("b", "pos_b", "pos", "mem"),
      AttentionHeadSpec::qkv("c", "pos_c", "pos", "mem"),
      AttentionHeadSpec::qkv("mem_a", "reg_a", "pos", "mem"),
      AttentionHeadSpec::qkv("mem_b", "reg_b", "pos", "mem"),
  };
  finalize_variables(spec);

  RuleBuilder bld(spec);
  bld.get("state", [&](const Value& state) {
    switch (state.cat_id()) {
      case kState1: {
        // Validity check plus operand-address capture.
        bld.get("a", [&](const Value& a) {
          if (!valid_address(a.cat_id())) {
            bld.set("state", kStateDone);
            return;
          }
          bld.get("b", [&](const Value& b) {
            bld.set("state",
                    valid_address(b.cat_id()) ? kState2 : kStateDone);
          });
        });
        bld.get("a", [&](const Value& a) {
          if (!valid_address(a.cat_id())) return;
          bld.get("reg_a", [&](const Value&) {
            bld.set("reg_a", a.cat_id());
          });
        });
        bld.get("b", [&](const Value& b) {
          if (!valid_address(b.cat_id())) return;
          bld.get("reg_b", [&](const Value&) {
            bld.set("reg_b", b.cat_id());
          });
        });
        break;
      }
      case kState2: {
        // result = mem[b] - mem[a]; store at b unless it leaves the value
        // range, which halts the machine.
        bld.get({"mem_a", "mem_b"}, [&](const std::vector<Value>& t) {
          int x = SubleqMachine::decode(t[0].cat_id());
          int y = SubleqMachine::decode(t[1].cat_id());
          int res = y - x;
          bool in_range = res >= kMin && res <= kMax;
          bld.set("state", in_range ? kState3 : kStateDone);
          bld.get("jump", [&](const Value&) {
            bld.set("jump", res <= 0 ? 1 : 0);
          });
        });
        bld.get("mem_a", [&](const Value& ma) {
          int x = SubleqMachine::decode(ma.cat_id());
          bld.get({"reg_b", "pos"}, [&](const std::vector<Value>& t) {
            if (t[0].cat_id() != t[1].cat_id()) return;
            bld.get("mem", [&](const Value& mem) {
              int res = SubleqMachine::decode(mem.cat_id()) - x;
              if (res >= kMin && res <= kMax) {
                bld.set("mem", SubleqMachine::encode(res));
              }
            });
          });
        });
        break;
      }
      case kState3: {
        bld.get("jump", [&](const Value& jump) {
          if (jump.cat_id() == 1) {
            bld.get("c", [&](const Value& c) {
              int target = SubleqMachine::decode(c.cat_id());
              if (target < 0 || target + 2 > kMax) {
                bld.set("state", kStateDone);
                return;
              }
              bld.set("state", kState1);
              bld.get("pos_a", [&](const Value&) {
                bld.set("pos_a", c.cat_id());
              });
              bld.get("pos_b", [&](const Value&) {
                bld.set("pos_b", c.cat_id() + 1);
              });
              bld.get("pos_c", [&](const Value&) {
                bld.set("pos_c", c.cat_id() + 2);
              });
            });
          } else {
            bld.get("pos_a", [&](const Value& pa) {
              int pc = SubleqMachine::decode(pa.cat_id());
              if (pc + 5 > kMax) {
                bld.set("state", kStateDone);
                return;
              }
              bld.set("state", kState1);
              bld.set("pos_a", pa.cat_id() + 3);
              bld.get("pos_b", [&](const Value& pb) {
                if (pb.cat_id() == pa.cat_id() + 1) {
                  bld.set("pos_b", pa.cat_id() + 4);
                }
              });
              bld.get("pos_c", [&](const Value& pc_) {
                if (pc_.cat_id() == pa.cat_id() + 2) {
                  bld.set("pos_c", pa.cat_id() + 5);
                }
              });
            });
          }
        });
        break;
      }
      default:
        break;
    }
  });
  spec.rules = bld.take_rules();
  spec.output_var = "mem";
  spec.halt = HaltSpec{"state", kStateDone};
  spec = add_reset_rules(std::move(spec));
  require_valid(spec);
  return spec;
}

SubleqOracleResult subleq_oracle(std::vector<int> registers,
                                 int max_instructions) {
  SubleqOracleResult r;
  int len = static_cast<int>(registers.size());
  int pc = 0;
  for (int step = 0; step < max_instructions; ++step) {
    if (pc + 2 >= len) {
      // The machine would read past the register file; treat as a stuck
      // (never-halting) program.
      r.registers = std::move(registers);
      return r;
    }
    int a = registers[pc];
    int b = registers[pc + 1];
    int c = registers[pc + 2];
    if (a < 0 || b < 0) {
      r.halt_state = 1;
      r.halted = true;
      break;
    }
    if (a >= len || b >= len) {
      r.registers = std::move(registers);
      return r;  // undefined fetch; callers exclude such programs
    }
    int res = registers[b] - registers[a];
    if (res < SubleqMachine::kMin || res > SubleqMachine::kMax) {
      r.halt_state = 2;
      r.halted = true;
      break;
    }
    registers[b] = res;
    r.instructions += 1;
    if (res <= 0) {
      if (c < 0 || c + 2 > SubleqMachine::kMax) {
        r.halt_state = 3;
        r.halted = true;
        break;
      }
      pc = c;
    } else {
      if (pc + 5 > SubleqMachine::kMax) {
        r.halt_state = 3;
        r.halted = true;
        break;
      }
      pc += 3;
    }
  }
  r.registers = std::move(registers);
  return r;
}

}  // namespace loom
