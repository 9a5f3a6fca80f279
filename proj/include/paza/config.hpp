// Layered configuration: CLI flags > environment > JSON file > defaults.
#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "paza/pipeline.hpp"

namespace paza {

struct AppConfig {
  PipelineConfig pipeline;
  std::filesystem::path alert_dir = "paza-data";
  std::filesystem::path image_dir = ".";

  void validate() const { pipeline.validate(); }
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Keys shared by the config file and --set overrides, e.g. "tau_d", "rho",
// "vlm_api_url". Throws ConfigError on an unknown key or a bad value.
void apply_setting(AppConfig& cfg, std::string_view key, const std::string& value);
std::vector<std::string> setting_keys();

// Environment variable -> setting key.
const std::vector<std::pair<std::string, std::string>>& env_bindings();

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
EnvLookup process_env();

AppConfig resolve_config(const std::optional<std::filesystem::path>& file, const EnvLookup& env,
                         const std::vector<std::pair<std::string, std::string>>& overrides);

}  // namespace paza
