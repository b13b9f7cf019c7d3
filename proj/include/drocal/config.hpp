#pragma once

#include "drocal/harness.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace drocal::config {

/// Configuration rejection carrying the dotted key path that failed.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& key, const std::string& what)
      : std::runtime_error("config error at '" + key + "': " + what), key_(key) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

/// Fully resolved CLI configuration: the base experiment plus sweep lists.
struct CliConfig {
  harness::ExperimentConfig base;
  std::vector<double> alphas;  // simulate-newsvendor sweep (may be empty)
  std::vector<double> levels;  // fairness-run sweep (may be empty)
  bool include_saa = true;     // prepend an SAA baseline row to fairness sweeps
  std::string normalized;     // canonical JSON echo with defaults filled
};

/// Parses, applies dotted-key overrides, validates (unknown keys rejected),
/// and fills documented defaults. Accepts either a plain config or a
/// manifest.json (the config is taken from its "config" key).
CliConfig validate_config(const std::string& path, const std::vector<std::string>& overrides);

/// Same, from an in-memory JSON string (used by tests).
CliConfig validate_config_text(const std::string& text, const std::vector<std::string>& overrides);

}  // namespace drocal::config
