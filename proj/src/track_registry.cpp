#include "paza/track_registry.hpp"

#include <algorithm>

namespace paza {

double dwell_seconds(const TrackState& track, std::uint64_t now_ms) {
  if (now_ms <= track.first_seen_ms) return 0.0;
  return static_cast<double>(now_ms - track.first_seen_ms) / 1000.0;
}

TrackRegistry::TrackRegistry(RegistryConfig config) : config_(config) {}

std::vector<PersonObservation> TrackRegistry::ingest(const FrameEvent& event) {
  Partition& part = partitions_[event.camera_id];
  if (part.last_timestamp_ms && event.timestamp_ms < *part.last_timestamp_ms) {
    throw StaleEvent("timestamp " + std::to_string(event.timestamp_ms) + " ms regresses below " +
                     std::to_string(*part.last_timestamp_ms) + " ms on camera " + event.camera_id);
  }
  part.last_timestamp_ms = event.timestamp_ms;

  std::vector<PersonObservation> out;
  out.reserve(event.tracks.size());
  for (const TrackedPerson& person : event.tracks) {
    auto it = part.tracks.find(person.track_id);
    if (it == part.tracks.end()) {
      TrackState fresh{
          .key = TrackKey{event.camera_id, person.track_id},
          .first_seen_ms = event.timestamp_ms,
          .last_seen_ms = event.timestamp_ms,
          .last_bbox = person.bbox,
          .last_keypoints = std::nullopt,
          .nearby_classes_prev = {},
          .pickup_active_until_ms = std::nullopt,
          .last_vlm_dispatch_ms = std::nullopt,
          .buffer = FrameBuffer(config_.buffer_horizon_ms, config_.buffer_hard_cap),
      };
      it = part.tracks.emplace(person.track_id, std::move(fresh)).first;
      ++tracks_created_;
    }
    TrackState& track = it->second;
    track.last_seen_ms = event.timestamp_ms;
    track.last_bbox = person.bbox;
    track.last_keypoints = person.keypoints;
    track.buffer.push(BufferedFrame{event.timestamp_ms, event.image_ref, person.bbox, person.keypoints});
    out.push_back(PersonObservation{&track, &person, &event.detections, event.timestamp_ms});
  }
  return out;
}

void TrackRegistry::gc_partition(Partition& partition, std::uint64_t now_ms, std::vector<TrackKey>& removed) const {
  for (auto it = partition.tracks.begin(); it != partition.tracks.end();) {
    const TrackState& t = it->second;
    if (now_ms > t.last_seen_ms && now_ms - t.last_seen_ms > config_.retention_ms) {
      removed.push_back(t.key);
      it = partition.tracks.erase(it);
    } else {
      ++it;
    }
  }
}

std::vector<TrackKey> TrackRegistry::gc_expired(std::uint64_t now_ms) {
  std::vector<TrackKey> removed;
  for (auto& [camera, part] : partitions_) gc_partition(part, now_ms, removed);
  std::sort(removed.begin(), removed.end());
  return removed;
}

std::vector<TrackKey> TrackRegistry::gc_expired(const std::string& camera_id, std::uint64_t now_ms) {
  std::vector<TrackKey> removed;
  if (auto it = partitions_.find(camera_id); it != partitions_.end()) gc_partition(it->second, now_ms, removed);
  std::sort(removed.begin(), removed.end());
  return removed;
}

const TrackState* TrackRegistry::find(const TrackKey& key) const {
  auto p = partitions_.find(key.camera_id);
  if (p == partitions_.end()) return nullptr;
  auto t = p->second.tracks.find(key.track_id);
  return t == p->second.tracks.end() ? nullptr : &t->second;
}

TrackState* TrackRegistry::find(const TrackKey& key) {
  return const_cast<TrackState*>(std::as_const(*this).find(key));
}

std::size_t TrackRegistry::size() const {
  std::size_t n = 0;
  for (const auto& [camera, part] : partitions_) n += part.tracks.size();
  return n;
}

}  // namespace paza
