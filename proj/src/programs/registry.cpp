#include <sstream>

#include "loom/programs.hpp"

namespace loom {

const std::vector<std::string>& program_names() {
  static const std::vector<std::string> names = {
      "parity_absolute", "parity_relative",     "parity_sum_modulo",
      "parity_sum_modulo_cat", "addition",      "subleq",
      "scan",
  };
  return names;
}

namespace {

std::vector<int> comma_ints(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stoi(item));
  }
  return out;
}

std::vector<int> parity_tokenize(const std::string& text, bool with_start) {
  // Accepts either raw bit strings ("1011") or comma-separated ids.
  std::vector<int> bits;
  bool plain = !text.empty();
  for (char c : text) {
    if (c == '0' || c == '1') {
      bits.push_back(c - '0');
    } else {
      plain = false;
      break;
    }
  }
  if (!plain) bits = comma_ints(text);
  if (with_start && (bits.empty() || bits.front() != kParityStart)) {
    bits.insert(bits.begin(), kParityStart);
  }
  return bits;
}

}  // namespace

ProgramBundle make_program(const std::string& name) {
  ProgramBundle b;
  b.name = name;
  if (name == "parity_absolute") {
    b.spec = parity_sequential_absolute();
    b.tokenize = [](const std::string& t) { return parity_tokenize(t, false); };
    b.notes = "bits, e.g. '1011'";
  } else if (name == "parity_relative") {
    b.spec = parity_sequential_relative();
    b.tokenize = [](const std::string& t) { return parity_tokenize(t, true); };
    b.notes = "bits, START prepended automatically";
  } else if (name == "parity_sum_modulo") {
    b.spec = parity_sum_modulo();
    b.tokenize = [](const std::string& t) { return parity_tokenize(t, true); };
    b.notes = "bits, START prepended automatically";
  } else if (name == "parity_sum_modulo_cat") {
    b.spec = parity_sum_modulo_categorical();
    b.tokenize = [](const std::string& t) { return parity_tokenize(t, true); };
    b.notes = "trace-supervision variant with a categorical ones count";
  } else if (name == "addition") {
    b.spec = addition_program();
    b.tokenize = addition_tokenize;
    b.notes = "e.g. '123+45'";
  } else if (name == "subleq") {
    b.spec = subleq_program();
    b.tokenize = [](const std::string& t) {
      std::vector<int> regs = comma_ints(t);
      for (int& r : regs) r = SubleqMachine::encode(r);
      return regs;
    };
    b.notes = "comma-separated register values";
  } else if (name == "scan") {
    b.spec = scan_program(scan_test_dims());
    b.tokenize = [](const std::string& t) {
      return scan_tokenize(t, scan_test_dims());
    };
    b.notes = "e.g. 'jump twice'";
  } else {
    throw std::invalid_argument("unknown program: " + name);
  }
  return b;
}

}  // namespace loom
