#include "paza/evaluate.hpp"

#include <algorithm>
#include <fstream>

#include "paza/clip_builder.hpp"
#include "paza/image_io.hpp"

namespace paza {
namespace {

using nlohmann::json;

bool label_of(const json& j) {
  if (j.is_boolean()) return j.get<bool>();
  if (j.is_number_integer()) return j.get<int>() != 0;
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    return s == "1" || s == "true" || s == "positive" || s == "shoplifting";
  }
  throw std::runtime_error("unrecognized clip label " + j.dump());
}

bool is_image(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".jpg" || ext == ".jpeg" || ext == ".png" || ext == ".bmp";
}

EvalRow score_text(std::string clip, bool label, std::string_view text) {
  EvalRow row{std::move(clip), label, std::nullopt, std::nullopt, std::nullopt};
  try {
    const Verdict v = parse_verdict(text);
    row.category = v.category;
    row.confidence = v.confidence;
  } catch (const VerdictParseError& e) {
    row.error = std::string("verdict_parse: ") + e.what();
  }
  return row;
}

}  // namespace

std::vector<ManifestClip> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read manifest " + path.string());
  const json j = json::parse(in);
  const json& list = j.is_array() ? j : j.at("clips");
  std::vector<ManifestClip> clips;
  for (const json& c : list) {
    ManifestClip clip;
    clip.dir = c.at("dir").get<std::string>();
    if (clip.dir.is_relative()) clip.dir = path.parent_path() / clip.dir;
    clip.positive = label_of(c.at("label"));
    clip.name = c.value("name", c.at("dir").get<std::string>());
    clips.push_back(std::move(clip));
  }
  return clips;
}

std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> frames;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image(entry.path())) frames.push_back(entry.path());
  }
  std::sort(frames.begin(), frames.end());
  return frames;
}

bool EvalRow::predicted_positive() const {
  return category == VerdictCategory::kConfirmed || category == VerdictCategory::kUncertain;
}

void EvalReport::add(EvalRow row) {
  if (row.error || !row.category || *row.category == VerdictCategory::kSkipped) {
    if (!row.error) row.error = "no verdict";
    ++errors;
  } else if (row.label) {
    ++(row.predicted_positive() ? tp : fn);
  } else {
    ++(row.predicted_positive() ? fp : tn);
  }
  rows.push_back(std::move(row));
}

json to_json(const EvalReport& r) {
  json rows = json::array();
  for (const EvalRow& row : r.rows) {
    json jr = {{"clip", row.clip}, {"label", row.label}};
    jr["category"] = row.category ? json(to_string(*row.category)) : json(nullptr);
    jr["confidence"] = row.confidence ? json(*row.confidence) : json(nullptr);
    jr["error"] = row.error ? json(*row.error) : json(nullptr);
    rows.push_back(std::move(jr));
  }
  return {{"counts", {{"tp", r.tp}, {"fp", r.fp}, {"tn", r.tn}, {"fn", r.fn}, {"errors", r.errors}}},
          {"metrics", to_json(r.metrics())},
          {"rows", std::move(rows)}};
}

EvalReport evaluate_clips(const std::vector<ManifestClip>& clips, VlmTransport& transport, const GatewayConfig& cfg,
                          const EvalOptions& opts) {
  EvalReport report;
  for (const ManifestClip& clip : clips) {
    std::error_code ec;
    if (!std::filesystem::is_directory(clip.dir, ec)) {
      report.add({clip.name, clip.positive, std::nullopt, std::nullopt, "missing directory " + clip.dir.string()});
      continue;
    }
    const auto frames = list_frames(clip.dir);
    if (frames.empty()) {
      report.add({clip.name, clip.positive, std::nullopt, std::nullopt, "no frames"});
      continue;
    }
    std::vector<std::size_t> idx;
    const std::size_t k = std::min(opts.frames_per_clip, frames.size());
    if (k >= 2) {
      idx = even_sample_indices(frames.size(), k);
    } else {
      idx = {0};
    }
    std::vector<std::string> encoded;
    std::optional<std::string> load_error;
    for (std::size_t i : idx) {
      auto img = load_image(frames[i]);
      if (!img) {
        load_error = "cannot decode " + frames[i].filename().string();
        break;
      }
      encoded.push_back(base64_encode(encode_jpeg(fit_long_side(*img, opts.max_image_side), opts.jpeg_quality)));
    }
    if (load_error) {
      report.add({clip.name, clip.positive, std::nullopt, std::nullopt, load_error});
      continue;
    }
    const DispatchResult r = call_vlm(transport, build_frames_prompt(encoded, cfg));
    if (const auto* v = std::get_if<Verdict>(&r)) {
      report.add({clip.name, clip.positive, v->category, v->confidence, std::nullopt});
    } else {
      const auto& e = std::get<DispatchError>(r);
      report.add({clip.name, clip.positive, std::nullopt, std::nullopt, to_string(e.kind) + ": " + e.message});
    }
  }
  return report;
}

EvalReport evaluate_recorded(const std::filesystem::path& verdict_log) {
  std::ifstream in(verdict_log);
  if (!in) throw std::runtime_error("cannot read " + verdict_log.string());
  EvalReport report;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    ++n;
    report.add(score_text(j.value("clip", "clip-" + std::to_string(n)), label_of(j.at("label")),
                          j.at("verdict").get<std::string>()));
  }
  return report;
}

}  // namespace paza
