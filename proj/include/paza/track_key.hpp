#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <string>

namespace paza {

// Identifies one person's presence on one camera.
struct TrackKey {
  std::string camera_id;
  std::uint64_t track_id = 0;

  auto operator<=>(const TrackKey&) const = default;
  bool operator==(const TrackKey&) const = default;

  std::string to_string() const { return camera_id + "/" + std::to_string(track_id); }
};

struct TrackKeyHash {
  std::size_t operator()(const TrackKey& k) const noexcept {
    const std::size_t h = std::hash<std::string>{}(k.camera_id);
    return h ^ (std::hash<std::uint64_t>{}(k.track_id) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
  }
};

}  // namespace paza
