#include <algorithm>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>

#include "loom/programs.hpp"
#include "loom/validate.hpp"

namespace loom {

const std::vector<ScanGrammarRule>& scan_grammar() {
  static const std::vector<ScanGrammarRule> rules = [] {
    std::vector<ScanGrammarRule> g;
    int id = 1;
    auto add = [&](std::vector<std::string> rhs, std::vector<std::string> emit,
                   bool eos_only = false) {
      g.push_back({id++, std::move(rhs), eos_only, std::move(emit)});
    };
    add({"walk"}, {"WALK"});
    add({"look"}, {"LOOK"});
    add({"run"}, {"RUN"});
    add({"jump"}, {"JUMP"});
    add({"turn", "left"}, {"LTURN"});
    add({"turn", "right"}, {"RTURN"});
    add({"NT", "left"}, {"LTURN", "$1"});
    add({"NT", "right"}, {"RTURN", "$1"});
    add({"turn", "opposite", "left"}, {"LTURN", "LTURN"});
    add({"turn", "opposite", "right"}, {"RTURN", "RTURN"});
    add({"NT", "opposite", "left"}, {"LTURN", "LTURN", "$1"});
    add({"NT", "opposite", "right"}, {"RTURN", "RTURN", "$1"});
    add({"turn", "around", "left"}, {"LTURN", "LTURN", "LTURN", "LTURN"});
    add({"turn", "around", "right"}, {"RTURN", "RTURN", "RTURN", "RTURN"});
    add({"NT", "around", "left"},
        {"LTURN", "$1", "LTURN", "$1", "LTURN", "$1", "LTURN", "$1"});
    add({"NT", "around", "right"},
        {"RTURN", "$1", "RTURN", "$1", "RTURN", "$1", "RTURN", "$1"});
    add({"NT", "twice"}, {"$1", "$1"});
    add({"NT", "thrice"}, {"$1", "$1", "$1"});
    add({"NT", "and", "NT"}, {"$1", "$2"}, true);
    add({"NT", "after", "NT"}, {"$2", "$1"}, true);
    return g;
  }();
  return rules;
}

namespace {

const std::vector<std::string>& scan_terminals() {
  static const std::vector<std::string> t = {
      "walk", "look",  "run",    "jump",   "turn",  "left",  "right",
      "opposite", "around", "twice", "thrice", "and", "after"};
  return t;
}

}  // namespace

std::vector<std::string> scan_oracle(const std::string& command) {
  // Tokenize.
  std::vector<std::string> toks;
  std::string cur;
  for (char c : command) {
    if (c == ' ') {
      if (!cur.empty()) toks.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) toks.push_back(cur);
  if (toks.empty()) throw std::invalid_argument("empty command");
  for (const auto& t : toks) {
    const auto& terms = scan_terminals();
    if (std::find(terms.begin(), terms.end(), t) == terms.end()) {
      throw std::invalid_argument("unknown token: " + t);
    }
  }

  // Recursive descent over: C -> S ((and|after) S)? ; S -> V (twice|thrice)? ;
  // V -> prim | prim/turn (opposite|around)? (left|right) .
  size_t pos = 0;
  auto peek = [&]() -> std::string {
    return pos < toks.size() ? toks[pos] : std::string();
  };
  auto take = [&]() { return toks[pos++]; };

  std::function<std::vector<std::string>()> parse_v = [&]() {
    std::string head = peek();
    bool is_prim = head == "walk" || head == "look" || head == "run" ||
                   head == "jump";
    bool is_turn = head == "turn";
    if (!is_prim && !is_turn) {
      throw std::invalid_argument("expected action near '" + head + "'");
    }
    take();
    std::vector<std::string> base;
    if (head == "walk") base = {"WALK"};
    if (head == "look") base = {"LOOK"};
    if (head == "run") base = {"RUN"};
    if (head == "jump") base = {"JUMP"};

    std::string mod = peek();
    int repeats = 1;
    bool has_dir = false;
    if (mod == "opposite" || mod == "around") {
      take();
      repeats = mod == "opposite" ? 2 : 4;
      has_dir = true;
    } else if (mod == "left" || mod == "right") {
      has_dir = true;
    }
    if (has_dir) {
      std::string dir = peek();
      if (dir != "left" && dir != "right") {
        throw std::invalid_argument("expected direction near '" + dir + "'");
      }
      take();
      std::string turn = dir == "left" ? "LTURN" : "RTURN";
      std::vector<std::string> out;
      if (repeats == 2 || repeats == 1) {
        for (int i = 0; i < repeats; ++i) out.push_back(turn);
        out.insert(out.end(), base.begin(), base.end());
      } else {
        for (int i = 0; i < 4; ++i) {
          out.push_back(turn);
          out.insert(out.end(), base.begin(), base.end());
        }
      }
      return out;
    }
    if (is_turn) {
      throw std::invalid_argument("'turn' requires a direction");
    }
    return base;
  };

  std::function<std::vector<std::string>()> parse_s = [&]() {
    std::vector<std::string> v = parse_v();
    std::string mod = peek();
    if (mod == "twice" || mod == "thrice") {
      take();
      int n = mod == "twice" ? 2 : 3;
      std::vector<std::string> out;
      for (int i = 0; i < n; ++i) out.insert(out.end(), v.begin(), v.end());
      return out;
    }
    return v;
  };

  std::vector<std::string> left = parse_s();
  std::string conj = peek();
  if (conj == "and" || conj == "after") {
    take();
    std::vector<std::string> right = parse_s();
    std::vector<std::string> out;
    if (conj == "and") {
      out = left;
      out.insert(out.end(), right.begin(), right.end());
    } else {
      out = right;
      out.insert(out.end(), left.begin(), left.end());
    }
    left = std::move(out);
    conj = peek();
  }
  if (pos != toks.size()) {
    throw std::invalid_argument("trailing tokens near '" + conj + "'");
  }
  return left;
}

ScanDims scan_test_dims() { return {11, 9, 8, 52}; }

namespace scan_detail {

// Input tokens: the 13 terminals, then EOS and MEM filler.
constexpr int kEos = 13;
constexpr int kMem = 14;
constexpr int kInputRange = 15;

// Stack symbols: terminals, the single nonterminal, and the empty marker.
constexpr int kSymNt = 13;
constexpr int kSymPad = 14;
constexpr int kSymRange = 15;

// Output tokens.
constexpr int kOutPad = 0;
constexpr int kOutRange = 7;
const char* kOutNames[kOutRange] = {"PAD",  "WALK",  "LOOK", "RUN",
                                    "JUMP", "LTURN", "RTURN"};

// Broadcast control values.
constexpr int kActionNone = 0;  // shift by default
constexpr int kActionDone = 21;
constexpr int kActionRange = 22;
constexpr int kDeltaNone = 0;
constexpr int kDeltaShift = 1;  // +1
constexpr int kDeltaZ = 2;      // 1 - L for L = 1
constexpr int kDeltaM1 = 3;     // L = 2
constexpr int kDeltaM2 = 4;     // L = 3
constexpr int kPendNone = 0;
constexpr int kPendEmit = 1;
constexpr int kPendDesc = 2;
constexpr int kPendRet = 3;
constexpr int kTplRange = 10;

int terminal_id(const std::string& name) {
  const auto& t = scan_terminals();
  for (size_t i = 0; i < t.size(); ++i) {
    if (t[i] == name) return static_cast<int>(i);
  }
  throw std::logic_error("not a terminal: " + name);
}

int symbol_id(const std::string& name) {
  if (name == "NT") return kSymNt;
  return terminal_id(name);
}

int out_id(const std::string& name) {
  for (int i = 0; i < kOutRange; ++i) {
    if (name == kOutNames[i]) return i;
  }
  throw std::logic_error("not an action: " + name);
}

struct TemplateStep {
  enum class Kind : std::uint8_t { Emit, Desc, Ret };
  Kind kind = Kind::Ret;
  int emit = 0;   // output token for Emit
  int child = 0;  // 1 or 2 for Desc
};

struct CompiledRule {
  int id = 0;
  std::vector<int> rhs;  // symbol ids, first = deepest
  bool eos_only = false;
  int delta = kDeltaZ;
  // Stack slot (1 = top) holding the k-th NT of the RHS, if any.
  int child1_slot = 0;
  int child2_slot = 0;
  std::vector<TemplateStep> steps;
};

const std::vector<CompiledRule>& compiled_rules() {
  static const std::vector<CompiledRule> rules = [] {
    std::vector<CompiledRule> out;
    for (const auto& g : scan_grammar()) {
      CompiledRule r;
      r.id = g.rule_id;
      for (const auto& s : g.rhs) r.rhs.push_back(symbol_id(s));
      r.eos_only = g.eos_only;
      int len = static_cast<int>(r.rhs.size());
      r.delta = len == 1 ? kDeltaZ : len == 2 ? kDeltaM1 : kDeltaM2;
      int nt_seen = 0;
      for (int i = 0; i < len; ++i) {
        if (r.rhs[i] == kSymNt) {
          ++nt_seen;
          int slot = len - i;  // distance from the top
          if (nt_seen == 1) {
            r.child1_slot = slot;
          } else {
            r.child2_slot = slot;
          }
        }
      }
      for (const auto& e : g.emit) {
        TemplateStep st;
        if (e == "$1") {
          st.kind = TemplateStep::Kind::Desc;
          st.child = 1;
        } else if (e == "$2") {
          st.kind = TemplateStep::Kind::Desc;
          st.child = 2;
        } else {
          st.kind = TemplateStep::Kind::Emit;
          st.emit = out_id(e);
        }
        r.steps.push_back(st);
      }
      r.steps.push_back({TemplateStep::Kind::Ret, 0, 0});
      if (static_cast<int>(r.steps.size()) > kTplRange) {
        throw std::logic_error("template too long");
      }
      out.push_back(std::move(r));
    }
    return out;
  }();
  return rules;
}

// Plain rule assembly; the scoped-branch builder would obscure the grammar
// tables this machine is generated from.
struct RuleSink {
  std::vector<TransitionRule> rules;

  void add(std::vector<Constraint> ante, const std::string& out, int old_v,
           int new_v) {
    if (old_v == new_v) return;
    bool has_out = false;
    for (const auto& c : ante) {
      if (c.var == out) has_out = true;
    }
    if (!has_out) ante.push_back({out, old_v});
    TransitionRule r;
    r.antecedent = std::move(ante);
    r.output_var = out;
    r.old_value = old_v;
    r.new_value = new_v;
    rules.push_back(std::move(r));
  }
};

int stack_length(const ScanDims& dims) { return dims.stack; }

}  // namespace scan_detail

// The parse phase runs a four-layer cycle per shift/reduce action: match
// the top-3 stack symbols plus one lookahead against the grammar, clean the
// consumed stack cells, write the tree node and move the pointers, then
// write the new top symbol. The decode phase walks the parse tree with an
// explicit frame stack in the stack region, three layers per template step,
// emitting one output token per Emit step into the output region.
ProgramSpec scan_program(const ScanDims& dims) {
  using namespace scan_detail;
  const int I = dims.input;
  const int S = stack_length(dims);
  const int T = dims.tree;
  const int O = dims.output;
  const int P = dims.positions();
  const int kNone = T;        // null value of tree pointers
  const int kTrDead = T + 1;  // tr_idx outside the tree region
  const int kFloor = 3;       // permanent PAD cells under the stack

  ProgramSpec spec;
  spec.input_range = kInputRange;
  spec.position_range = P;

  auto pos_table = [&](const std::function<int(int)>& fn) {
    std::vector<Value> t;
    t.reserve(P);
    for (int i = 0; i < P; ++i) t.push_back(Value::cat(fn(i)));
    return VarInit::position_table(std::move(t));
  };
  std::vector<Value> token_init;
  for (int x = 0; x < kInputRange; ++x) token_init.push_back(Value::cat(x));

  const int in_off = 0;
  const int sc_off = I;
  const int tr_off = I + S;
  const int out_off = I + S + T;

  spec.variables = {
      VariableSpec::categorical("token", kInputRange,
                                VarInit::input_table(token_init)),
      VariableSpec::categorical("in_idx", I + 1, pos_table([&](int i) {
                                  return i < I ? i : I;
                                })),
      VariableSpec::categorical("sc_idx", S + 1, pos_table([&](int i) {
                                  return i >= sc_off && i < sc_off + S
                                             ? i - sc_off
                                             : S;
                                })),
      VariableSpec::categorical("tr_idx", kTrDead + 1, pos_table([&](int i) {
                                  return i >= tr_off && i < tr_off + T
                                             ? i - tr_off
                                             : kTrDead;
                                })),
      VariableSpec::categorical("out_mark", 2, pos_table([&](int i) {
                                  return i == out_off ? 1 : 0;
                                })),
      VariableSpec::categorical("symbol", kSymRange, VarInit::none(),
                                Value::cat(kSymPad)),
      VariableSpec::categorical("stack_tptr", T + 1, VarInit::none(),
                                Value::cat(kNone)),
      VariableSpec::categorical("rule_id", kActionRange - 1, VarInit::none(),
                                Value::cat(0)),
      VariableSpec::categorical("child1", T + 1, VarInit::none(),
                                Value::cat(kNone)),
      VariableSpec::categorical("child2", T + 1, VarInit::none(),
                                Value::cat(kNone)),
      VariableSpec::categorical("frame_node", T + 1, VarInit::none(),
                                Value::cat(kNone)),
      VariableSpec::categorical("frame_tpl", kTplRange),
      VariableSpec::categorical("out_tok", kOutRange),
      VariableSpec::categorical("phase", 2),
      VariableSpec::categorical("tick", 4),
      VariableSpec::categorical("done", 2),
      VariableSpec::categorical("action", kActionRange),
      VariableSpec::categorical("delta", 5),
      VariableSpec::categorical("red", 2),
      VariableSpec::categorical("sp0", S, VarInit::none(),
                                Value::cat(kFloor)),
      VariableSpec::categorical("sp1", S, VarInit::none(),
                                Value::cat(kFloor - 1)),
      VariableSpec::categorical("sp2", S, VarInit::none(),
                                Value::cat(kFloor - 2)),
      VariableSpec::categorical("sp3", S, VarInit::none(),
                                Value::cat(kFloor - 3)),
      VariableSpec::categorical("input_ptr", I),
      VariableSpec::categorical("tnext", T + 1),
      VariableSpec::categorical("childA", T + 1, VarInit::none(),
                                Value::cat(kNone)),
      VariableSpec::categorical("childB", T + 1, VarInit::none(),
                                Value::cat(kNone)),
      VariableSpec::categorical("cur", T + 1, VarInit::none(),
                                Value::cat(kNone)),
      VariableSpec::categorical("next_cur", T + 1, VarInit::none(),
                                Value::cat(kNone)),
      VariableSpec::categorical("tpl", kTplRange),
      VariableSpec::categorical("pend", 4),
      VariableSpec::categorical("which", 3),
      VariableSpec::categorical("emit_tok", kOutRange),
  };
  spec.heads = {
      AttentionHeadSpec::qkv("la", "input_ptr", "in_idx", "token"),
      AttentionHeadSpec::qkv("s1", "sp1", "sc_idx", "symbol"),
      AttentionHeadSpec::qkv("s2", "sp2", "sc_idx", "symbol"),
      AttentionHeadSpec::qkv("s3", "sp3", "sc_idx", "symbol"),
      AttentionHeadSpec::qkv("t1", "sp1", "sc_idx", "stack_tptr"),
      AttentionHeadSpec::qkv("t2", "sp2", "sc_idx", "stack_tptr"),
      AttentionHeadSpec::qkv("t3", "sp3", "sc_idx", "stack_tptr"),
      AttentionHeadSpec::qkv("rule_at", "cur", "tr_idx", "rule_id"),
      AttentionHeadSpec::qkv("ch1_at", "cur", "tr_idx", "child1"),
      AttentionHeadSpec::qkv("ch2_at", "cur", "tr_idx", "child2"),
      AttentionHeadSpec::qkv("fr_node", "sp1", "sc_idx", "frame_node"),
      AttentionHeadSpec::qkv("fr_tpl", "sp1", "sc_idx", "frame_tpl"),
      AttentionHeadSpec::relative("om_l", "out_mark", -1),
  };
  finalize_variables(spec);

  RuleSink sink;
  auto C = [](std::string var, int value) { return Constraint{var, value}; };
  const char* sp_name[4] = {"sp0", "sp1", "sp2", "sp3"};
  const char* t_name[4] = {"", "t1", "t2", "t3"};
  auto delta_len = [](int d) {
    return d == kDeltaZ ? 1 : d == kDeltaM1 ? 2 : 3;
  };

  // ---- parse, tick 0: match -------------------------------------------
  for (const auto& r : compiled_rules()) {
    std::vector<Constraint> pat = {C("phase", 0), C("tick", 0)};
    if (r.eos_only) pat.push_back(C("la", kEos));
    int len = static_cast<int>(r.rhs.size());
    for (int i = 0; i < len; ++i) {
      pat.push_back(C(sp_name[len - i], r.rhs[i]));
      // sp_k names the pointer; the constraint is on the matched symbol.
    }
    // Rewrite the sp constraints into symbol-head constraints.
    for (auto& c : pat) {
      if (c.var == "sp1") c.var = "s1";
      if (c.var == "sp2") c.var = "s2";
      if (c.var == "sp3") c.var = "s3";
    }
    {
      auto a = pat;
      a.push_back(C("action", kActionNone));
      sink.add(a, "action", kActionNone, r.id);
    }
    {
      auto a = pat;
      a.push_back(C("delta", kDeltaNone));
      sink.add(a, "delta", kDeltaNone, r.delta);
    }
    if (r.child1_slot) {
      for (int c = 0; c < T; ++c) {
        auto a = pat;
        a.push_back(C(t_name[r.child1_slot], c));
        a.push_back(C("childA", kNone));
        sink.add(a, "childA", kNone, c);
      }
    }
    if (r.child2_slot) {
      for (int c = 0; c < T; ++c) {
        auto a = pat;
        a.push_back(C(t_name[r.child2_slot], c));
        a.push_back(C("childB", kNone));
        sink.add(a, "childB", kNone, c);
      }
    }
  }
  sink.add({C("phase", 0), C("tick", 0), C("la", kEos), C("s1", kSymNt),
            C("s2", kSymPad), C("action", kActionNone)},
           "action", kActionNone, kActionDone);

  // ---- parse, tick 1: stack cleanup -----------------------------------
  for (int t = 0; t < 13; ++t) {
    sink.add({C("phase", 0), C("tick", 1), C("action", kActionNone),
              C("la", t), C("delta", kDeltaNone)},
             "delta", kDeltaNone, kDeltaShift);
  }
  {
    // Symbols of the consumed suffix cells, by (delta, slot, symbol).
    std::set<std::tuple<int, int, int>> combos;
    for (const auto& r : compiled_rules()) {
      int len = static_cast<int>(r.rhs.size());
      for (int i = 0; i < len; ++i) {
        combos.insert({r.delta, len - i, r.rhs[i]});
      }
    }
    for (const auto& [d, k, sym] : combos) {
      for (int v = 0; v < S; ++v) {
        sink.add({C("phase", 0), C("tick", 1), C("delta", d), C("sc_idx", v),
                  C(sp_name[k], v), C("symbol", sym)},
                 "symbol", sym, kSymPad);
      }
    }
    // Tree pointer of the cell the new nonterminal will replace (the
    // deepest suffix slot). Cells popped above it go stale harmlessly:
    // their pointers are never read again and clear here if the cell is
    // ever replaced later. The cell's own value always equals the
    // corresponding head value, which keeps these rules linear.
    for (auto [d, k] : {std::pair{kDeltaZ, 1}, {kDeltaM1, 2}, {kDeltaM2, 3}}) {
      for (int v = 0; v < S; ++v) {
        for (int c = 0; c < T; ++c) {
          sink.add({C("phase", 0), C("tick", 1), C("delta", d),
                    C("sc_idx", v), C(sp_name[k], v), C(t_name[k], c),
                    C("stack_tptr", c)},
                   "stack_tptr", c, kNone);
        }
      }
    }
  }
  for (int d : {kDeltaZ, kDeltaM1, kDeltaM2}) {
    sink.add({C("phase", 0), C("tick", 1), C("delta", d), C("red", 0)},
             "red", 0, 1);
  }

  // ---- parse, tick 2: tree writes and pointer moves -------------------
  for (int a = 1; a <= 20; ++a) {
    for (int v = 0; v < T; ++v) {
      sink.add({C("phase", 0), C("tick", 2), C("action", a), C("tr_idx", v),
                C("tnext", v), C("rule_id", 0)},
               "rule_id", 0, a);
    }
  }
  for (int v = 0; v < T; ++v) {
    for (int c = 0; c < T; ++c) {
      sink.add({C("phase", 0), C("tick", 2), C("tr_idx", v), C("tnext", v),
                C("childA", c), C("child1", kNone)},
               "child1", kNone, c);
      sink.add({C("phase", 0), C("tick", 2), C("tr_idx", v), C("tnext", v),
                C("childB", c), C("child2", kNone)},
               "child2", kNone, c);
    }
  }
  for (int v = 0; v < S; ++v) {
    for (int t = 0; t < 13; ++t) {
      sink.add({C("phase", 0), C("tick", 2), C("delta", kDeltaShift),
                C("sc_idx", v), C("sp0", v), C("la", t),
                C("symbol", kSymPad)},
               "symbol", kSymPad, t);
    }
  }
  for (int k = 0; k < 4; ++k) {
    for (int v = 0; v < S; ++v) {
      if (v + 1 < S) {
        sink.add({C("phase", 0), C("tick", 2), C("delta", kDeltaShift),
                  C(sp_name[k], v)},
                 sp_name[k], v, v + 1);
      }
      if (v - 1 >= 0) {
        sink.add({C("phase", 0), C("tick", 2), C("delta", kDeltaM1),
                  C(sp_name[k], v)},
                 sp_name[k], v, v - 1);
      }
      if (v - 2 >= 0) {
        sink.add({C("phase", 0), C("tick", 2), C("delta", kDeltaM2),
                  C(sp_name[k], v)},
                 sp_name[k], v, v - 2);
      }
    }
  }
  for (int v = 0; v + 1 < I; ++v) {
    sink.add({C("phase", 0), C("tick", 2), C("delta", kDeltaShift),
              C("input_ptr", v)},
             "input_ptr", v, v + 1);
  }
  for (int v = 0; v + 1 < T; ++v) {
    sink.add({C("phase", 0), C("tick", 2), C("red", 1), C("tnext", v)},
             "tnext", v, v + 1);
  }
  sink.add({C("phase", 0), C("tick", 2), C("action", kActionDone)},
           "phase", 0, 1);
  for (int c = 0; c < T; ++c) {
    sink.add({C("phase", 0), C("tick", 2), C("action", kActionDone),
              C("t1", c), C("cur", kNone)},
             "cur", kNone, c);
  }

  // ---- parse, tick 3: new-top writes and control resets ----------------
  for (int v = 0; v < S; ++v) {
    sink.add({C("phase", 0), C("tick", 3), C("red", 1), C("sc_idx", v),
              C("sp1", v), C("symbol", kSymPad)},
             "symbol", kSymPad, kSymNt);
    for (int t = 1; t < T; ++t) {
      sink.add({C("phase", 0), C("tick", 3), C("red", 1), C("sc_idx", v),
                C("sp1", v), C("stack_tptr", kNone), C("tnext", t)},
               "stack_tptr", kNone, t - 1);
    }
  }
  for (int a = 1; a < kActionRange; ++a) {
    sink.add({C("tick", 3), C("action", a)}, "action", a, kActionNone);
  }
  for (int d = 1; d < 5; ++d) {
    sink.add({C("tick", 3), C("delta", d)}, "delta", d, kDeltaNone);
  }
  sink.add({C("tick", 3), C("red", 1)}, "red", 1, 0);
  for (int c = 0; c < T; ++c) {
    sink.add({C("tick", 3), C("childA", c)}, "childA", c, kNone);
    sink.add({C("tick", 3), C("childB", c)}, "childB", c, kNone);
  }

  // ---- decode, tick 0: template step selection -------------------------
  std::set<int> push_tpls;  // tpl values live while a descend is pending
  std::set<int> ret_tpls;
  for (const auto& r : compiled_rules()) {
    for (size_t i = 0; i < r.steps.size(); ++i) {
      const TemplateStep& st = r.steps[i];
      std::vector<Constraint> base = {C("phase", 1), C("tick", 0),
                                      C("pend", kPendNone),
                                      C("rule_at", r.id),
                                      C("tpl", static_cast<int>(i))};
      switch (st.kind) {
        case TemplateStep::Kind::Emit: {
          auto a = base;
          a.push_back(C("emit_tok", 0));
          sink.add(a, "emit_tok", 0, st.emit);
          sink.add(base, "pend", kPendNone, kPendEmit);
          sink.add(base, "tpl", static_cast<int>(i), static_cast<int>(i + 1));
          break;
        }
        case TemplateStep::Kind::Desc: {
          sink.add(base, "pend", kPendNone, kPendDesc);
          {
            auto a = base;
            a.push_back(C("which", 0));
            sink.add(a, "which", 0, st.child);
          }
          sink.add(base, "tpl", static_cast<int>(i), static_cast<int>(i + 1));
          push_tpls.insert(static_cast<int>(i + 1));
          break;
        }
        case TemplateStep::Kind::Ret: {
          sink.add(base, "pend", kPendNone, kPendRet);
          ret_tpls.insert(static_cast<int>(i));
          break;
        }
      }
    }
  }

  // ---- decode, tick 1: apply the pending step --------------------------
  for (int a = 1; a < kOutRange; ++a) {
    sink.add({C("phase", 1), C("tick", 1), C("pend", kPendEmit),
              C("out_mark", 1), C("emit_tok", a), C("out_tok", kOutPad)},
             "out_tok", kOutPad, a);
    sink.add({C("phase", 1), C("tick", 1), C("pend", kPendEmit),
              C("emit_tok", a)},
             "emit_tok", a, 0);
  }
  sink.add({C("phase", 1), C("tick", 1), C("pend", kPendEmit),
            C("out_mark", 0), C("om_l", 1)},
           "out_mark", 0, 1);
  sink.add({C("phase", 1), C("tick", 1), C("pend", kPendEmit),
            C("out_mark", 1), C("om_l", 0)},
           "out_mark", 1, 0);

  for (int c = 0; c < T; ++c) {
    sink.add({C("phase", 1), C("tick", 1), C("pend", kPendDesc),
              C("which", 1), C("ch1_at", c), C("next_cur", kNone)},
             "next_cur", kNone, c);
    sink.add({C("phase", 1), C("tick", 1), C("pend", kPendDesc),
              C("which", 2), C("ch2_at", c), C("next_cur", kNone)},
             "next_cur", kNone, c);
  }
  for (int v = 0; v < S; ++v) {
    for (int c = 0; c < T; ++c) {
      sink.add({C("phase", 1), C("tick", 1), C("pend", kPendDesc),
                C("sc_idx", v), C("sp0", v), C("cur", c),
                C("frame_node", kNone)},
               "frame_node", kNone, c);
    }
    for (int j : push_tpls) {
      sink.add({C("phase", 1), C("tick", 1), C("pend", kPendDesc),
                C("sc_idx", v), C("sp0", v), C("tpl", j), C("frame_tpl", 0)},
               "frame_tpl", 0, j);
    }
  }
  // Only the push target and the frame top matter during decode; sp2 and
  // sp3 go stale once parsing ends.
  for (int k = 0; k < 2; ++k) {
    for (int v = 0; v + 1 < S; ++v) {
      sink.add({C("phase", 1), C("tick", 1), C("pend", kPendDesc),
                C(sp_name[k], v)},
               sp_name[k], v, v + 1);
    }
    for (int v = 1; v < S; ++v) {
      sink.add({C("phase", 1), C("tick", 1), C("pend", kPendRet),
                C(sp_name[k], v)},
               sp_name[k], v, v - 1);
    }
  }
  for (int c = 0; c < T; ++c) {
    sink.add({C("phase", 1), C("tick", 1), C("pend", kPendDesc), C("cur", c)},
             "cur", c, kNone);
    sink.add({C("phase", 1), C("tick", 1), C("pend", kPendRet), C("cur", c)},
             "cur", c, kNone);
    sink.add({C("phase", 1), C("tick", 1), C("pend", kPendRet),
              C("fr_node", c), C("next_cur", kNone)},
             "next_cur", kNone, c);
  }
  for (int j : push_tpls) {
    sink.add({C("phase", 1), C("tick", 1), C("pend", kPendDesc), C("tpl", j)},
             "tpl", j, 0);
  }
  for (int o : ret_tpls) {
    for (int j : push_tpls) {
      sink.add({C("phase", 1), C("tick", 1), C("pend", kPendRet), C("tpl", o),
                C("fr_tpl", j)},
               "tpl", o, j);
    }
  }
  for (int v = 0; v < S; ++v) {
    for (int c = 0; c < T; ++c) {
      sink.add({C("phase", 1), C("tick", 1), C("pend", kPendRet),
                C("sc_idx", v), C("sp1", v), C("fr_node", c),
                C("frame_node", c)},
               "frame_node", c, kNone);
    }
    for (int j : push_tpls) {
      sink.add({C("phase", 1), C("tick", 1), C("pend", kPendRet),
                C("sc_idx", v), C("sp1", v), C("fr_tpl", j),
                C("frame_tpl", j)},
               "frame_tpl", j, 0);
    }
  }
  sink.add({C("phase", 1), C("tick", 1), C("pend", kPendRet),
            C("fr_node", kNone), C("done", 0)},
           "done", 0, 1);

  // ---- decode, tick 2: commit the traversal move -----------------------
  for (int c = 0; c < T; ++c) {
    sink.add({C("phase", 1), C("tick", 2), C("next_cur", c), C("cur", kNone)},
             "cur", kNone, c);
    sink.add({C("phase", 1), C("tick", 2), C("next_cur", c)},
             "next_cur", c, kNone);
  }
  for (int p = 1; p < 4; ++p) {
    sink.add({C("phase", 1), C("tick", 2), C("pend", p)}, "pend", p,
             kPendNone);
  }
  for (int k = 1; k < 3; ++k) {
    sink.add({C("phase", 1), C("tick", 2), C("which", k)}, "which", k, 0);
  }

  // ---- tick wheel: four beats in parse, three in decode ----------------
  sink.add({C("tick", 0)}, "tick", 0, 1);
  sink.add({C("tick", 1)}, "tick", 1, 2);
  sink.add({C("phase", 0), C("tick", 2)}, "tick", 2, 3);
  sink.add({C("phase", 1), C("tick", 2)}, "tick", 2, 0);
  sink.add({C("tick", 3)}, "tick", 3, 0);

  spec.rules = sink.rules;
  spec.output_var = "out_tok";
  spec.halt = HaltSpec{"done", 1};
  spec.default_max_layers = 512;
  spec = add_reset_rules(std::move(spec));
  require_valid(spec);
  return spec;
}

std::vector<int> scan_tokenize(const std::string& command,
                               const ScanDims& dims) {
  using namespace scan_detail;
  std::vector<int> ids;
  std::string cur;
  auto flush = [&]() {
    if (!cur.empty()) {
      ids.push_back(terminal_id(cur));
      cur.clear();
    }
  };
  for (char c : command) {
    if (c == ' ') {
      flush();
    } else {
      cur.push_back(c);
    }
  }
  flush();
  if (static_cast<int>(ids.size()) + 1 > dims.input) {
    throw std::invalid_argument("command longer than the input region");
  }
  ids.push_back(kEos);
  ids.resize(dims.positions(), kMem);
  return ids;
}

std::vector<std::string> scan_decode_output(const std::vector<int>& output_ids,
                                            const ScanDims& dims) {
  using namespace scan_detail;
  std::vector<std::string> out;
  int out_off = dims.input + dims.stack + dims.tree;
  for (size_t i = out_off; i < output_ids.size(); ++i) {
    if (output_ids[i] != kOutPad) {
      out.push_back(kOutNames[output_ids[i]]);
    }
  }
  return out;
}

std::vector<ScanExample> load_scan_split(const std::string& path) {
  std::vector<ScanExample> out;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto in_pos = line.find("IN:");
    auto out_pos = line.find("OUT:");
    if (in_pos == std::string::npos || out_pos == std::string::npos) {
      throw std::runtime_error("bad split line: " + line);
    }
    ScanExample ex;
    std::string cmd = line.substr(in_pos + 3, out_pos - (in_pos + 3));
    std::string acts = line.substr(out_pos + 4);
    auto trim = [](std::string s) {
      size_t a = s.find_first_not_of(' ');
      size_t b = s.find_last_not_of(" \r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    ex.command = trim(cmd);
    std::istringstream as(trim(acts));
    std::string tok;
    while (as >> tok) ex.actions.push_back(tok);
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<std::string> scan_sample_commands(int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto pick = [&](const std::vector<std::string>& opts) {
    return opts[rng() % opts.size()];
  };
  std::set<std::string> seen;
  std::vector<std::string> out;
  auto sample_v = [&]() {
    std::vector<std::string> prims = {"walk", "look", "run", "jump"};
    std::vector<std::string> dirs = {"left", "right"};
    int shape = static_cast<int>(rng() % 5);
    switch (shape) {
      case 0:
        return pick(prims);
      case 1:
        return pick(prims) + " " + pick(dirs);
      case 2:
        return std::string("turn ") + pick(dirs);
      case 3: {
        std::string head = rng() % 4 == 0 ? std::string("turn") : pick(prims);
        return head + " opposite " + pick(dirs);
      }
      default: {
        std::string head = rng() % 4 == 0 ? std::string("turn") : pick(prims);
        return head + " around " + pick(dirs);
      }
    }
  };
  auto sample_s = [&]() {
    std::string v = sample_v();
    int rep = static_cast<int>(rng() % 3);
    if (rep == 1) return v + " twice";
    if (rep == 2) return v + " thrice";
    return v;
  };
  int guard = 0;
  while (static_cast<int>(out.size()) < count && guard < count * 100) {
    ++guard;
    std::string cmd;
    int shape = static_cast<int>(rng() % 3);
    if (shape == 0) {
      cmd = sample_s();
    } else {
      cmd = sample_s() + (shape == 1 ? " and " : " after ") + sample_s();
    }
    if (seen.insert(cmd).second) out.push_back(cmd);
  }
  return out;
}

}  // namespace loom
