// Per-person circular frame buffers and K-frame clip materialization.
#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "paza/event_model.hpp"
#include "paza/track_key.hpp"

namespace paza {

struct BufferedFrame {
  std::uint64_t timestamp_ms = 0;
  std::optional<std::string> image_ref;
  BBox person_bbox;
  std::optional<Keypoints> keypoints;
};

class OutOfOrderFrame : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyBuffer : public std::runtime_error {
 public:
  EmptyBuffer() : std::runtime_error("cannot sample a clip from an empty buffer") {}
};

// Time-bounded ring of recent frames for one track. Eviction is time based;
// hard_cap only bounds memory for bursty producers.
class FrameBuffer {
 public:
  FrameBuffer(std::uint64_t horizon_ms, std::size_t hard_cap);

  // Throws OutOfOrderFrame when frame is older than the newest buffered one.
  void push(BufferedFrame frame);

  const std::deque<BufferedFrame>& frames() const { return frames_; }
  std::size_t size() const { return frames_.size(); }
  bool empty() const { return frames_.empty(); }
  std::uint64_t horizon_ms() const { return horizon_ms_; }
  std::size_t hard_cap() const { return hard_cap_; }

 private:
  std::uint64_t horizon_ms_;
  std::size_t hard_cap_;
  std::deque<BufferedFrame> frames_;
};

// 2 * T * fps, at least 1.
std::size_t buffer_hard_cap(double horizon_s, int nominal_fps);

struct ClipGeometry {
  double frame_width = 1280.0;
  double frame_height = 720.0;
  double pad_frac = 0.2;
};

struct ClipFrame {
  std::uint64_t timestamp_ms = 0;
  std::optional<std::string> image_ref;
  BBox crop_rect;
  BBox person_bbox;
  std::optional<Keypoints> keypoints;
};

struct ClipSpec {
  TrackKey key;
  std::vector<ClipFrame> frames;
  std::size_t label_total = 0;
};

// Indices round_half_up(i*(n-1)/(k-1)) for i in [0, k). Requires n >= k >= 2.
std::vector<std::size_t> even_sample_indices(std::size_t n, std::size_t k);

// Samples min(N, k) frames; label_total is the number of frames sent.
ClipSpec sample_clip(const TrackKey& key, const FrameBuffer& buffer, std::size_t k,
                     const ClipGeometry& geometry);

// Expands by pad_frac of width (x) and height (y), then clamps to the frame.
BBox crop_with_padding(const BBox& bbox, double frame_width, double frame_height,
                       double pad_frac = 0.2);

// Interleaved 8-bit raster, row-major.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;

  std::uint8_t* at(int x, int y) { return pixels.data() + (static_cast<std::size_t>(y) * width + x) * channels; }
  const std::uint8_t* at(int x, int y) const {
    return pixels.data() + (static_cast<std::size_t>(y) * width + x) * channels;
  }
  bool operator==(const Image&) const = default;
};

struct FaceDisc {
  Point center;
  double radius = 0.0;
};

inline constexpr int kPixelationBlock = 16;
inline constexpr double kMinFaceRadius = 8.0;

// Disc over the head keypoints (0..4) passing the gate; nullopt when fewer
// than two pass.
std::optional<FaceDisc> face_disc(const Keypoints& keypoints, double conf_gate = 0.2);

// Pixelates the face disc in 16 px grid-aligned blocks. Pixels outside the disc
// are never touched.
Image obfuscate_faces(Image image, const Keypoints& keypoints, double conf_gate = 0.2);

}  // namespace paza
