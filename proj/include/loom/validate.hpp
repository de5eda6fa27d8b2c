#pragma once

#include <string>
#include <vector>

#include "loom/program.hpp"

namespace loom {

struct ValidationIssue {
  enum class Severity { Error, Warning };
  Severity severity = Severity::Error;
  std::string element;  // name of the offending spec element
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;

  bool ok() const {
    for (const auto& i : issues) {
      if (i.severity == ValidationIssue::Severity::Error) return false;
    }
    return true;
  }
  std::vector<ValidationIssue> errors() const;
  std::string str() const;
};

// Structural validation; never throws.
ValidationReport validate_program(const ProgramSpec& spec);

// Throws std::invalid_argument with the report text if validation fails.
void require_valid(const ProgramSpec& spec);

}  // namespace loom
