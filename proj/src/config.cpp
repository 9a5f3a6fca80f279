#include "paza/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

namespace paza {
namespace {

double to_double(std::string_view key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError(std::string(key) + ": expected a number, got '" + v + "'");
}

int to_int(std::string_view key, const std::string& v) {
  int out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ConfigError(std::string(key) + ": expected an integer, got '" + v + "'");
  }
  return out;
}

using Setter = std::function<void(AppConfig&, std::string_view, const std::string&)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"vlm_api_url", [](AppConfig& c, auto, const std::string& v) { c.pipeline.gateway.api_url = v; }},
      {"vlm_model_name", [](AppConfig& c, auto, const std::string& v) { c.pipeline.gateway.model_name = v; }},
      {"vlm_api_key", [](AppConfig& c, auto, const std::string& v) { c.pipeline.gateway.api_key = v; }},
      {"rate_limit",
       [](AppConfig& c, auto k, const std::string& v) {
         const int r = to_int(k, v);
         c.pipeline.prefilter.rate_limit_per_min = r;
         c.pipeline.gateway.rate_limit_per_min = r;
       }},
      {"tau_d", [](AppConfig& c, auto k, const std::string& v) { c.pipeline.prefilter.tau_d_s = to_double(k, v); }},
      {"rho", [](AppConfig& c, auto k, const std::string& v) { c.pipeline.prefilter.rho = to_double(k, v); }},
      {"theta_h", [](AppConfig& c, auto k, const std::string& v) { c.pipeline.prefilter.theta_h = to_double(k, v); }},
      {"tau_c", [](AppConfig& c, auto k, const std::string& v) { c.pipeline.prefilter.tau_c_s = to_double(k, v); }},
      {"k", [](AppConfig& c, auto k, const std::string& v) { c.pipeline.prefilter.clip_frames_k = to_int(k, v); }},
      {"t",
       [](AppConfig& c, auto k, const std::string& v) { c.pipeline.prefilter.buffer_horizon_s = to_double(k, v); }},
      {"retention_h",
       [](AppConfig& c, auto k, const std::string& v) { c.pipeline.alert_retention_h = to_double(k, v); }},
      {"track_retention_s",
       [](AppConfig& c, auto k, const std::string& v) { c.pipeline.track_retention_s = to_double(k, v); }},
      {"retry_max", [](AppConfig& c, auto k, const std::string& v) { c.pipeline.gateway.retry_max = to_int(k, v); }},
      {"retry_window_s",
       [](AppConfig& c, auto k, const std::string& v) { c.pipeline.gateway.retry_window_s = to_double(k, v); }},
      {"queue_cap",
       [](AppConfig& c, auto k, const std::string& v) {
         const int n = to_int(k, v);
         if (n < 1) throw ConfigError("queue_cap must be >= 1");
         c.pipeline.gateway.queue_cap = static_cast<std::size_t>(n);
       }},
      {"request_timeout_s",
       [](AppConfig& c, auto k, const std::string& v) { c.pipeline.gateway.request_timeout_s = to_double(k, v); }},
      {"max_in_flight",
       [](AppConfig& c, auto k, const std::string& v) { c.pipeline.gateway.max_in_flight = to_int(k, v); }},
      {"fps", [](AppConfig& c, auto k, const std::string& v) { c.pipeline.nominal_fps = to_int(k, v); }},
      {"frame_width",
       [](AppConfig& c, auto k, const std::string& v) { c.pipeline.geometry.frame_width = to_double(k, v); }},
      {"frame_height",
       [](AppConfig& c, auto k, const std::string& v) { c.pipeline.geometry.frame_height = to_double(k, v); }},
      {"alert_dir", [](AppConfig& c, auto, const std::string& v) { c.alert_dir = v; }},
      {"image_dir", [](AppConfig& c, auto, const std::string& v) { c.image_dir = v; }},
  };
  return table;
}

}  // namespace

void apply_setting(AppConfig& cfg, std::string_view key, const std::string& value) {
  auto it = setters().find(key);
  if (it == setters().end()) throw ConfigError("unknown setting '" + std::string(key) + "'");
  it->second(cfg, key, value);
}

std::vector<std::string> setting_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : setters()) keys.push_back(k);
  return keys;
}

const std::vector<std::pair<std::string, std::string>>& env_bindings() {
  static const std::vector<std::pair<std::string, std::string>> bindings = {
      {"VLM_API_URL", "vlm_api_url"},   {"VLM_MODEL_NAME", "vlm_model_name"}, {"VLM_API_KEY", "vlm_api_key"},
      {"PAZA_RATE_LIMIT", "rate_limit"}, {"PAZA_TAU_D", "tau_d"},             {"PAZA_RHO", "rho"},
      {"PAZA_THETA_H", "theta_h"},       {"PAZA_TAU_C", "tau_c"},             {"PAZA_K", "k"},
      {"PAZA_T", "t"},                   {"PAZA_RETENTION_H", "retention_h"},
  };
  return bindings;
}

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
  };
}

AppConfig resolve_config(const std::optional<std::filesystem::path>& file, const EnvLookup& env,
                         const std::vector<std::pair<std::string, std::string>>& overrides) {
  AppConfig cfg;
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("cannot read config file " + file->string());
    const nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (!j.is_object()) throw ConfigError(file->string() + ": expected a JSON object");
    for (const auto& [key, value] : j.items()) {
      apply_setting(cfg, key, value.is_string() ? value.get<std::string>() : value.dump());
    }
  }
  if (env) {
    for (const auto& [var, key] : env_bindings()) {
      if (auto v = env(var); v && !v->empty()) apply_setting(cfg, key, *v);
    }
  }
  for (const auto& [key, value] : overrides) apply_setting(cfg, key, value);
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

}  // namespace paza
