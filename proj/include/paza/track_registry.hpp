// Per-(camera, track) memory across frames, with retention-based eviction.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "paza/clip_builder.hpp"
#include "paza/event_model.hpp"
#include "paza/track_key.hpp"

namespace paza {

struct TrackState {
  TrackKey key;
  std::uint64_t first_seen_ms = 0;
  std::uint64_t last_seen_ms = 0;
  BBox last_bbox;
  std::optional<Keypoints> last_keypoints;
  std::set<std::uint16_t> nearby_classes_prev;
  std::optional<std::uint64_t> pickup_active_until_ms;
  std::optional<std::uint64_t> last_vlm_dispatch_ms;
  FrameBuffer buffer;
};

// Transient read-model handed to the pre-filter. Pointers stay valid until the
// next ingest or gc on the same registry.
struct PersonObservation {
  TrackState* track = nullptr;
  const TrackedPerson* person = nullptr;
  const std::vector<Detection>* detections = nullptr;
  std::uint64_t timestamp_ms = 0;
};

class StaleEvent : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RegistryConfig {
  std::uint64_t retention_ms = 10'000;
  std::uint64_t buffer_horizon_ms = 5'000;
  std::size_t buffer_hard_cap = 100;
};

double dwell_seconds(const TrackState& track, std::uint64_t now_ms);

// Not internally synchronized; callers serialize ingest and gc.
class TrackRegistry {
 public:
  explicit TrackRegistry(RegistryConfig config = {});

  // Creates/updates the TrackState of every person in the event and appends
  // the frame to each person's buffer. Throws StaleEvent when the timestamp
  // regresses for the event's camera.
  std::vector<PersonObservation> ingest(const FrameEvent& event);

  // Drops tracks with now_ms - last_seen_ms > retention_ms.
  std::vector<TrackKey> gc_expired(std::uint64_t now_ms);
  std::vector<TrackKey> gc_expired(const std::string& camera_id, std::uint64_t now_ms);

  const TrackState* find(const TrackKey& key) const;
  TrackState* find(const TrackKey& key);
  std::size_t size() const;
  std::uint64_t tracks_created() const { return tracks_created_; }
  const RegistryConfig& config() const { return config_; }

 private:
  struct Partition {
    std::optional<std::uint64_t> last_timestamp_ms;
    std::unordered_map<std::uint64_t, TrackState> tracks;
  };

  void gc_partition(Partition& partition, std::uint64_t now_ms, std::vector<TrackKey>& removed) const;

  RegistryConfig config_;
  std::map<std::string, Partition, std::less<>> partitions_;
  std::uint64_t tracks_created_ = 0;
};

}  // namespace paza
