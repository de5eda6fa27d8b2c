#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "loom/program.hpp"

namespace loom {

// ---- parity ----------------------------------------------------------
// Binary-sequence parity. The relative and sum+modulo variants expect a
// leading START token (id 2); the absolute variant takes raw bits.
inline constexpr int kParityStart = 2;

ProgramSpec parity_sequential_absolute(int num_pos = 40);
ProgramSpec parity_sequential_relative();
ProgramSpec parity_sum_modulo(int max_ones = 40);
// Trace-supervision variant that stores the counted ones as an
// intermediate categorical variable.
ProgramSpec parity_sum_modulo_categorical(int max_ones = 40);

// ---- addition --------------------------------------------------------
// Tokens: digits 0..9, START=10, ADD=11, END=12. Output values: digits plus
// PAD=10. Operands are padded to equal length (leading zeros).
struct AdditionTokens {
  static constexpr int kStart = 10;
  static constexpr int kAdd = 11;
  static constexpr int kEnd = 12;
  static constexpr int kPad = 10;  // output alphabet
};
ProgramSpec addition_program();
std::vector<int> addition_tokenize(const std::string& text);  // "34+56"
// Reads the written digits out of a per-position output row.
std::string addition_decode_output(const std::vector<int>& output_ids);

// ---- subleq ----------------------------------------------------------
// One-instruction machine over bounded registers. Sequence position i holds
// register i; values are encoded as value - kMin.
struct SubleqMachine {
  static constexpr int kMin = -10;
  static constexpr int kMax = 10;
  static constexpr int kMemRange = kMax - kMin + 1;

  static int encode(int v) { return v - kMin; }
  static int decode(int v) { return v + kMin; }
};
ProgramSpec subleq_program();
// Reference evaluator used as the test oracle. Returns final registers and
// the number of executed instructions; `halt_state` reports which machine
// state detected the halt (1, 2, or 3).
struct SubleqOracleResult {
  std::vector<int> registers;
  int instructions = 0;
  int halt_state = 0;
  bool halted = false;
};
SubleqOracleResult subleq_oracle(std::vector<int> registers,
                                 int max_instructions = 1000);

// ---- scan ------------------------------------------------------------
struct ScanGrammarRule {
  int rule_id = 0;  // 1-based; 0 is reserved for "no rule"
  std::vector<std::string> rhs;  // stack-suffix pattern, "NT" or terminal
  bool eos_only = false;         // reduce only with EOS lookahead
  // Emission template: actions plus child references "$1"/"$2" in output
  // order (children numbered left to right in the RHS).
  std::vector<std::string> emit;
};

const std::vector<ScanGrammarRule>& scan_grammar();

// Direct recursive evaluator of the grammar (test oracle).
// Throws std::invalid_argument on non-SCAN input.
std::vector<std::string> scan_oracle(const std::string& command);

struct ScanExample {
  std::string command;
  std::vector<std::string> actions;
};
// Parses lines of the form "IN: <command> OUT: <actions>".
std::vector<ScanExample> load_scan_split(const std::string& path);

// Region capacities for the token-as-memory layout.
struct ScanDims {
  int input = 64;
  int stack = 64;
  int tree = 128;
  int output = 256;
  int positions() const { return input + stack + tree + output; }
};
// Tight sizing used by the bundled tests.
ScanDims scan_test_dims();

ProgramSpec scan_program(const ScanDims& dims = {});
std::vector<int> scan_tokenize(const std::string& command,
                               const ScanDims& dims = {});
// Extracts emitted actions from a per-position output row.
std::vector<std::string> scan_decode_output(const std::vector<int>& output_ids,
                                            const ScanDims& dims = {});
// Deterministic sampler over the grammar (fixture generation).
std::vector<std::string> scan_sample_commands(int count, std::uint64_t seed);

// ---- registry --------------------------------------------------------
struct ProgramBundle {
  std::string name;
  ProgramSpec spec;
  std::function<std::vector<int>(const std::string&)> tokenize;  // optional
  std::string notes;
};

const std::vector<std::string>& program_names();
ProgramBundle make_program(const std::string& name);

}  // namespace loom
