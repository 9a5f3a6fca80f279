// Wire/data model for per-frame detection events (the Layer 1 -> Layer 2
// boundary). One FrameEvent per JSON line.
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace paza {

inline constexpr std::uint16_t kPersonClass = 0;
inline constexpr std::size_t kNumKeypoints = 17;

// COCO keypoint indices used by the pre-filter and obfuscation.
namespace coco {
inline constexpr std::size_t kNose = 0;
inline constexpr std::size_t kLeftShoulder = 5;
inline constexpr std::size_t kRightShoulder = 6;
inline constexpr std::size_t kLeftWrist = 9;
inline constexpr std::size_t kRightWrist = 10;
inline constexpr std::size_t kLeftHip = 11;
inline constexpr std::size_t kRightHip = 12;
}  // namespace coco

struct Point {
  double x = 0.0;
  double y = 0.0;
};

// Corner-form box in frame pixels.
struct BBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  Point center() const { return {(x1 + x2) / 2.0, (y1 + y2) / 2.0}; }
  double diagonal() const;

  bool operator==(const BBox&) const = default;
};

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  double conf = 0.0;

  bool operator==(const Keypoint&) const = default;
};

using Keypoints = std::array<Keypoint, kNumKeypoints>;

struct Detection {
  std::uint16_t class_id = 0;
  double confidence = 0.0;
  BBox bbox;

  bool operator==(const Detection&) const = default;
};

struct TrackedPerson {
  std::uint64_t track_id = 0;
  BBox bbox;
  std::optional<Keypoints> keypoints;

  bool operator==(const TrackedPerson&) const = default;
};

struct FrameEvent {
  std::string camera_id;
  std::uint64_t frame_index = 0;
  std::uint64_t timestamp_ms = 0;
  std::optional<std::string> image_ref;
  std::vector<Detection> detections;
  std::vector<TrackedPerson> tracks;

  bool operator==(const FrameEvent&) const = default;
};

class ParseError : public std::runtime_error {
 public:
  enum class Kind { kMalformedJson, kSchema, kInvariant };

  ParseError(Kind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

class StreamError : public std::runtime_error {
 public:
  enum class Kind { kRegressingFrameIndex, kRegressingTimestamp };

  StreamError(Kind kind, std::size_t position, const std::string& camera_id);

  Kind kind() const { return kind_; }
  // Index into the validated sequence of the offending event.
  std::size_t position() const { return position_; }

 private:
  Kind kind_;
  std::size_t position_;
};

// Throws ParseError. Never crashes on arbitrary input.
FrameEvent parse_frame_event(std::string_view line);

// Compact single-line JSON, field order fixed.
std::string serialize_frame_event(const FrameEvent& event);

// Checks strictly increasing frame_index and non-decreasing timestamp_ms per
// camera. Events of different cameras may be interleaved. Throws StreamError.
void validate_stream(const std::vector<FrameEvent>& events);

}  // namespace paza
