#pragma once

#include <filesystem>
#include <stdexcept>

#include <json.hpp>

#include "docdenoise/trainer.hpp"

namespace docdenoise {

/// Invalid run configuration. `key()` names the offending entry.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string key, const std::string& message)
      : std::invalid_argument("config key '" + key + "': " + message), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

/// Flat typed key/value document (a JSON object of scalars). Unknown keys,
/// wrong types and out-of-range values are rejected. Relative paths are
/// resolved against `base_dir`.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// Fully resolved config in the same flat schema; parse_run_config accepts it.
nlohmann::json to_json(const RunConfig& cfg);

nlohmann::json to_json(const GeneratorConfig& cfg);
nlohmann::json to_json(const DiscriminatorConfig& cfg);
GeneratorConfig generator_config_from_json(const nlohmann::json& j);
DiscriminatorConfig discriminator_config_from_json(const nlohmann::json& j);

}  // namespace docdenoise
