#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "paza/event_model.hpp"
#include "paza/track_registry.hpp"

namespace paza::testing {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("paza-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Keypoints uniform_keypoints(double conf, double x = 0.0, double y = 0.0) {
  Keypoints k{};
  for (auto& p : k) p = Keypoint{x, y, conf};
  return k;
}

inline TrackedPerson person(std::uint64_t id, BBox box, std::optional<Keypoints> kp = std::nullopt) {
  return TrackedPerson{id, box, std::move(kp)};
}

inline Detection object(std::uint16_t cls, BBox box, double conf = 0.9) { return Detection{cls, conf, box}; }

inline FrameEvent frame(std::string camera, std::uint64_t index, std::uint64_t ts, std::vector<TrackedPerson> tracks = {},
                        std::vector<Detection> detections = {}) {
  FrameEvent e;
  e.camera_id = std::move(camera);
  e.frame_index = index;
  e.timestamp_ms = ts;
  e.tracks = std::move(tracks);
  e.detections = std::move(detections);
  return e;
}

// Box of the given size centred on (cx, cy).
inline BBox box_at(double cx, double cy, double w, double h) { return BBox{cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2}; }

inline TrackState make_track(std::uint64_t first_seen, TrackKey key = {"c", 1}) {
  TrackState t{key, first_seen, first_seen, BBox{}, std::nullopt, {}, std::nullopt, std::nullopt, FrameBuffer(5000, 100)};
  return t;
}

}  // namespace paza::testing
