// Offline clip-level evaluation: K evenly spaced full frames per labelled clip,
// CONFIRMED/UNCERTAIN counted as positive.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "paza/analytics.hpp"
#include "paza/vlm_gateway.hpp"

namespace paza {

struct ManifestClip {
  std::string name;
  std::filesystem::path dir;
  bool positive = false;
};

// {"clips": [{"dir": "...", "label": true|false|1|0, "name": optional}]};
// relative dirs resolve against the manifest's directory.
std::vector<ManifestClip> load_manifest(const std::filesystem::path& path);

// Image files in dir, sorted by file name.
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir);

struct EvalRow {
  std::string clip;
  bool label = false;
  std::optional<VerdictCategory> category;
  std::optional<int> confidence;
  std::optional<std::string> error;

  bool predicted_positive() const;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;
  std::uint64_t errors = 0;

  ConfusionMetrics metrics() const { return confusion_metrics(tp, fp, tn, fn); }
  void add(EvalRow row);
};

nlohmann::json to_json(const EvalReport& r);

struct EvalOptions {
  std::size_t frames_per_clip = 5;
  int jpeg_quality = 80;
  int max_image_side = 768;
};

EvalReport evaluate_clips(const std::vector<ManifestClip>& clips, VlmTransport& transport, const GatewayConfig& cfg,
                          const EvalOptions& opts = {});

// Recorded-verdict mode: JSONL rows {"clip", "label", "verdict"} with raw model
// text, scored without any endpoint.
EvalReport evaluate_recorded(const std::filesystem::path& verdict_log);

}  // namespace paza
