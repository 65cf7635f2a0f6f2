#pragma once
#include <stdexcept>

namespace fvpop {

// Malformed input (config files, CLI arguments, inconsistent shapes).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Model rejected by the admissibility checks.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Runtime self-check failure: conservation drift, guard bound exceeded,
// solver diagnostics out of tolerance.
struct DiagnosticError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace fvpop
