#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "fedidm/sim.hpp"
#include "json.hpp"

namespace fedidm {

/// Anything wrong with a config file, an override or a report directory.
/// The CLI maps this to exit code 2; genuine runtime failures stay
/// std::runtime_error and exit with 3.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One experiment file: a base simulation config plus the grid axes the
/// driver expands. Empty axes fall back to the base field.
struct ExperimentConfig {
  SimConfig base;
  std::string output_dir = "runs";
  std::vector<std::string> aggregators;
  std::vector<std::string> attacks;
  std::vector<std::uint64_t> seeds;
};

/// Canonical attack ordering used by the report tables.
const std::vector<std::string>& attack_names_ordered();

/// Strict parse: unknown keys anywhere are an error, value types must
/// match, and the embedded SimConfig is range-validated before returning.
ExperimentConfig config_from_json(const nlohmann::json& j);

/// Full echo including every default; config_from_json(config_to_json(c))
/// round-trips to the same json.
nlohmann::json config_to_json(const ExperimentConfig& cfg);

/// Reads raw json from disk; the error message names the path.
nlohmann::json load_json_file(const std::string& path);

/// load_json_file followed by the strict parse.
ExperimentConfig load_config_file(const std::string& path);

/// Applies one `--set dotted.path=value` override onto raw json. Values
/// parse as json when possible and fall back to strings.
void apply_override(nlohmann::json& j, const std::string& assignment);

}  // namespace fedidm
