// Append-only alert log with an in-memory index rebuilt on open.
//
// Every line of alerts.jsonl is the full current state of one alert; the last
// line for an alert_id wins when the log is replayed. Snapshot images live
// beside the log as {alert_id}_{i}.jpg.
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "paza/clip_builder.hpp"
#include "paza/prefilter.hpp"
#include "paza/track_key.hpp"
#include "paza/vlm_gateway.hpp"

namespace paza {

inline constexpr std::int64_t kClipPreEventMs = 4'000;
inline constexpr std::int64_t kClipPostEventMs = 3'000;

enum class ReviewStatus { kPending, kConfirmed, kDismissed };

std::string to_string(ReviewStatus s);
std::optional<ReviewStatus> review_status_from_string(std::string_view s);

struct ClipFrameRef {
  std::uint64_t timestamp_ms = 0;
  std::optional<std::string> image_ref;
  BBox crop_rect;

  bool operator==(const ClipFrameRef&) const = default;
};

struct AlertRecord {
  std::string alert_id;
  TrackKey key;
  std::uint64_t created_ms = 0;
  std::uint64_t recorded_ms = 0;
  VerdictCategory category = VerdictCategory::kConfirmed;
  int confidence = 0;
  std::string description;
  std::vector<ClipFrameRef> clip_frames;
  std::int64_t clip_window_start_ms = 0;
  std::int64_t clip_window_end_ms = 0;
  ReviewStatus review = ReviewStatus::kPending;
  std::optional<std::string> review_note;
  std::optional<std::uint64_t> reviewed_ms;
  std::vector<std::string> snapshots;
  bool snapshots_purged = false;

  bool operator==(const AlertRecord&) const = default;
};

nlohmann::json to_json(const AlertRecord& a);
AlertRecord alert_from_json(const nlohmann::json& j);

class StoreWriteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ReviewConflict : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class StoreEvent { kAlertCreated, kAlertReviewed, kSnapshotsPurged };

class AlertStore {
 public:
  using Listener = std::function<void(StoreEvent, const AlertRecord&)>;

  // Creates dir if needed and replays any existing log.
  explicit AlertStore(std::filesystem::path dir, int snapshot_jpeg_quality = 80);

  // Returns nullopt for NORMAL. SKIPPED is a programming error
  // (std::invalid_argument). Snapshot images, when given, are written as
  // {alert_id}_{i}.jpg and must already be obfuscated.
  std::optional<AlertRecord> record_alert(const Verdict& verdict, const VlmCandidate& candidate, std::uint64_t now_ms,
                                          const std::vector<Image>& snapshots = {});

  // Throws ReviewConflict when the alert is no longer pending. nullopt when
  // the id is unknown.
  std::optional<AlertRecord> review(const std::string& alert_id, ReviewStatus decision,
                                    std::optional<std::string> note, std::uint64_t now_ms);

  // Deletes snapshot files of alerts with age >= retention; metadata stays.
  // Returns the number of files deleted.
  std::size_t cleanup_retention(std::uint64_t now_ms, double retention_h = 24.0);

  std::optional<AlertRecord> get(const std::string& alert_id) const;
  std::vector<AlertRecord> list(std::uint64_t since_ms = 0) const;
  std::size_t size() const;

  void set_listener(Listener listener);

  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path log_path() const { return dir_ / "alerts.jsonl"; }

 private:
  void append_locked(const AlertRecord& record);
  void notify(StoreEvent ev, const AlertRecord& record) const;

  std::filesystem::path dir_;
  int jpeg_quality_;
  mutable std::shared_mutex mu_;
  std::ofstream log_;
  std::map<std::string, AlertRecord> index_;
  std::uint64_t next_seq_ = 1;
  Listener listener_;
};

}  // namespace paza
