#pragma once

#include <string>

#include <json.hpp>

#include "loom/program.hpp"

namespace loom {

struct SerializationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

nlohmann::json value_to_json(const Value& v);
Value value_from_json(const nlohmann::json& j, VarKind kind);

nlohmann::json spec_to_json(const ProgramSpec& spec);
ProgramSpec spec_from_json(const nlohmann::json& j);

// Byte-stable text form (sorted keys, shortest round-trip floats).
std::string spec_to_string(const ProgramSpec& spec);
ProgramSpec spec_from_string(const std::string& text);

}  // namespace loom
