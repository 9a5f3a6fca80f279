#include "paza/alert_store.hpp"

#include <cmath>
#include <cstdio>
#include <mutex>

#include "paza/image_io.hpp"

namespace paza {
namespace {

using nlohmann::json;

std::string format_alert_id(std::uint64_t seq) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "alert-%06llu", static_cast<unsigned long long>(seq));
  return buf;
}

std::uint64_t parse_seq(const std::string& id) {
  const auto dash = id.rfind('-');
  if (dash == std::string::npos) return 0;
  try {
    return std::stoull(id.substr(dash + 1));
  } catch (...) {
    return 0;
  }
}

}  // namespace

std::string to_string(ReviewStatus s) {
  switch (s) {
    case ReviewStatus::kPending:
      return "pending";
    case ReviewStatus::kConfirmed:
      return "confirmed";
    case ReviewStatus::kDismissed:
      return "dismissed";
  }
  return "pending";
}

std::optional<ReviewStatus> review_status_from_string(std::string_view s) {
  if (s == "pending") return ReviewStatus::kPending;
  if (s == "confirmed") return ReviewStatus::kConfirmed;
  if (s == "dismissed") return ReviewStatus::kDismissed;
  return std::nullopt;
}

json to_json(const AlertRecord& a) {
  json frames = json::array();
  for (const auto& f : a.clip_frames) {
    json jf = {{"timestamp_ms", f.timestamp_ms},
               {"crop_rect", json::array({f.crop_rect.x1, f.crop_rect.y1, f.crop_rect.x2, f.crop_rect.y2})}};
    if (f.image_ref) jf["image_ref"] = *f.image_ref;
    frames.push_back(std::move(jf));
  }
  json j = {{"alert_id", a.alert_id},
            {"camera_id", a.key.camera_id},
            {"track_id", a.key.track_id},
            {"created_ms", a.created_ms},
            {"recorded_ms", a.recorded_ms},
            {"category", to_string(a.category)},
            {"confidence", a.confidence},
            {"description", a.description},
            {"clip_frames", std::move(frames)},
            {"clip_window", json::array({a.clip_window_start_ms, a.clip_window_end_ms})},
            {"review", to_string(a.review)},
            {"snapshots", a.snapshots},
            {"snapshots_purged", a.snapshots_purged}};
  j["review_note"] = a.review_note ? json(*a.review_note) : json(nullptr);
  j["reviewed_ms"] = a.reviewed_ms ? json(*a.reviewed_ms) : json(nullptr);
  return j;
}

AlertRecord alert_from_json(const json& j) {
  AlertRecord a;
  a.alert_id = j.at("alert_id").get<std::string>();
  a.key = TrackKey{j.at("camera_id").get<std::string>(), j.at("track_id").get<std::uint64_t>()};
  a.created_ms = j.at("created_ms").get<std::uint64_t>();
  a.recorded_ms = j.value("recorded_ms", a.created_ms);
  const auto cat = category_from_string(j.at("category").get<std::string>());
  if (!cat) throw std::runtime_error("bad category in alert " + a.alert_id);
  a.category = *cat;
  a.confidence = j.at("confidence").get<int>();
  a.description = j.value("description", "");
  for (const json& f : j.value("clip_frames", json::array())) {
    ClipFrameRef r;
    r.timestamp_ms = f.at("timestamp_ms").get<std::uint64_t>();
    const json& c = f.at("crop_rect");
    r.crop_rect = BBox{c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>(), c.at(3).get<double>()};
    if (f.contains("image_ref")) r.image_ref = f["image_ref"].get<std::string>();
    a.clip_frames.push_back(std::move(r));
  }
  const json& w = j.at("clip_window");
  a.clip_window_start_ms = w.at(0).get<std::int64_t>();
  a.clip_window_end_ms = w.at(1).get<std::int64_t>();
  a.review = review_status_from_string(j.value("review", "pending")).value_or(ReviewStatus::kPending);
  if (j.contains("review_note") && j["review_note"].is_string()) a.review_note = j["review_note"].get<std::string>();
  if (j.contains("reviewed_ms") && j["reviewed_ms"].is_number_unsigned())
    a.reviewed_ms = j["reviewed_ms"].get<std::uint64_t>();
  a.snapshots = j.value("snapshots", std::vector<std::string>{});
  a.snapshots_purged = j.value("snapshots_purged", false);
  return a;
}

AlertStore::AlertStore(std::filesystem::path dir, int snapshot_jpeg_quality)
    : dir_(std::move(dir)), jpeg_quality_(snapshot_jpeg_quality) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw StoreWriteError("cannot create " + dir_.string() + ": " + ec.message());

  if (std::ifstream in(log_path()); in) {
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json j = json::parse(line, nullptr, false);
      // A torn final line from a crash is skipped.
      if (j.is_discarded()) continue;
      AlertRecord a = alert_from_json(j);
      next_seq_ = std::max(next_seq_, parse_seq(a.alert_id) + 1);
      index_[a.alert_id] = std::move(a);
    }
  }
  log_.open(log_path(), std::ios::app);
  if (!log_) throw StoreWriteError("cannot open " + log_path().string());
}

void AlertStore::append_locked(const AlertRecord& record) {
  log_ << to_json(record).dump() << '\n';
  log_.flush();
  if (!log_) throw StoreWriteError("append to " + log_path().string() + " failed");
}

void AlertStore::notify(StoreEvent ev, const AlertRecord& record) const {
  if (listener_) listener_(ev, record);
}

std::optional<AlertRecord> AlertStore::record_alert(const Verdict& verdict, const VlmCandidate& candidate,
                                                    std::uint64_t now_ms, const std::vector<Image>& snapshots) {
  if (verdict.category == VerdictCategory::kSkipped) {
    throw std::invalid_argument("SKIPPED verdicts belong to the retry queue, not the alert store");
  }
  if (!verdict.alerts()) return std::nullopt;

  AlertRecord a;
  a.key = candidate.key;
  a.created_ms = candidate.created_ms;
  a.recorded_ms = now_ms;
  a.category = verdict.category;
  a.confidence = verdict.confidence;
  a.description = verdict.description;
  for (const ClipFrame& f : candidate.clip.frames) a.clip_frames.push_back({f.timestamp_ms, f.image_ref, f.crop_rect});
  a.clip_window_start_ms = static_cast<std::int64_t>(candidate.created_ms) - kClipPreEventMs;
  a.clip_window_end_ms = static_cast<std::int64_t>(candidate.created_ms) + kClipPostEventMs;

  {
    std::unique_lock lock(mu_);
    a.alert_id = format_alert_id(next_seq_++);
    for (std::size_t i = 0; i < snapshots.size(); ++i) {
      const std::string name = a.alert_id + "_" + std::to_string(i) + ".jpg";
      if (!write_jpeg(dir_ / name, snapshots[i], jpeg_quality_)) {
        throw StoreWriteError("cannot write snapshot " + name);
      }
      a.snapshots.push_back(name);
    }
    append_locked(a);
    index_[a.alert_id] = a;
  }
  notify(StoreEvent::kAlertCreated, a);
  return a;
}

std::optional<AlertRecord> AlertStore::review(const std::string& alert_id, ReviewStatus decision,
                                              std::optional<std::string> note, std::uint64_t now_ms) {
  if (decision == ReviewStatus::kPending) throw std::invalid_argument("review decision must be confirmed or dismissed");
  AlertRecord updated;
  {
    std::unique_lock lock(mu_);
    auto it = index_.find(alert_id);
    if (it == index_.end()) return std::nullopt;
    if (it->second.review != ReviewStatus::kPending) {
      throw ReviewConflict(alert_id + " already " + to_string(it->second.review));
    }
    updated = it->second;
    updated.review = decision;
    updated.review_note = std::move(note);
    updated.reviewed_ms = now_ms;
    append_locked(updated);
    it->second = updated;
  }
  notify(StoreEvent::kAlertReviewed, updated);
  return updated;
}

std::size_t AlertStore::cleanup_retention(std::uint64_t now_ms, double retention_h) {
  const auto retention_ms = static_cast<std::uint64_t>(std::llround(std::max(0.0, retention_h) * 3'600'000.0));
  std::size_t deleted = 0;
  std::vector<AlertRecord> purged;
  {
    std::unique_lock lock(mu_);
    for (auto& [id, a] : index_) {
      if (a.snapshots_purged) continue;
      const std::uint64_t age = now_ms > a.created_ms ? now_ms - a.created_ms : 0;
      if (age < retention_ms) continue;
      for (const std::string& name : a.snapshots) {
        std::error_code ec;
        if (std::filesystem::remove(dir_ / name, ec)) ++deleted;
      }
      a.snapshots.clear();
      a.snapshots_purged = true;
      append_locked(a);
      purged.push_back(a);
    }
  }
  for (const auto& a : purged) notify(StoreEvent::kSnapshotsPurged, a);
  return deleted;
}

std::optional<AlertRecord> AlertStore::get(const std::string& alert_id) const {
  std::shared_lock lock(mu_);
  auto it = index_.find(alert_id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<AlertRecord> AlertStore::list(std::uint64_t since_ms) const {
  std::shared_lock lock(mu_);
  std::vector<AlertRecord> out;
  for (const auto& [id, a] : index_) {
    if (a.created_ms >= since_ms) out.push_back(a);
  }
  return out;
}

std::size_t AlertStore::size() const {
  std::shared_lock lock(mu_);
  return index_.size();
}

void AlertStore::set_listener(Listener listener) {
  std::unique_lock lock(mu_);
  listener_ = std::move(listener);
}

}  // namespace paza
