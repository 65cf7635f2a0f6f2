#pragma once
// JSON configuration for models and run settings: parsing with field-path
// diagnostics, canonical re-serialization (sorted keys, round-trip floats),
// dotted-path overrides, and a stable content hash that names run output
// directories.

#include <cstdint>
#include <string>
#include <vector>

#include "fvpop/engine.hpp"
#include "fvpop/model.hpp"

namespace fvpop {

struct RunConfig {
  ModelSpec model;
  SimConfig sim;
};

// Parse a config document holding a "model" section and an optional "sim"
// section. Malformed documents throw ConfigError naming the offending field
// path.
RunConfig config_from_json(const std::string& text);
RunConfig load_config(const std::string& path);

// Canonical serialization: object keys sorted, numbers in shortest
// round-trip form; equal configs serialize to equal bytes.
std::string config_to_json(const RunConfig& cfg);

// Apply `--key value` overrides as dotted paths into the document, e.g.
// "sim.N 400" or "model.init.h0 [1.5,1.5]"; values parse as JSON scalars or
// arrays, falling back to strings.
std::string apply_overrides(const std::string& text,
                            const std::vector<std::pair<std::string, std::string>>& overrides);

// FNV-1a 64-bit of the canonical serialization, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);
uint64_t fnv1a64(const std::string& bytes);

}  // namespace fvpop
