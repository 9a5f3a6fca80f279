#include "paza/clip_builder.hpp"

#include <algorithm>
#include <cmath>

namespace paza {

FrameBuffer::FrameBuffer(std::uint64_t horizon_ms, std::size_t hard_cap)
    : horizon_ms_(horizon_ms), hard_cap_(std::max<std::size_t>(hard_cap, 1)) {}

void FrameBuffer::push(BufferedFrame frame) {
  if (!frames_.empty() && frame.timestamp_ms < frames_.back().timestamp_ms) {
    throw OutOfOrderFrame("frame at " + std::to_string(frame.timestamp_ms) + " ms precedes newest buffered frame at " +
                          std::to_string(frames_.back().timestamp_ms) + " ms");
  }
  const std::uint64_t newest = frame.timestamp_ms;
  frames_.push_back(std::move(frame));
  while (newest - frames_.front().timestamp_ms > horizon_ms_) frames_.pop_front();
  while (frames_.size() > hard_cap_) frames_.pop_front();
}

std::size_t buffer_hard_cap(double horizon_s, int nominal_fps) {
  const double cap = 2.0 * horizon_s * nominal_fps;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cap)));
}

std::vector<std::size_t> even_sample_indices(std::size_t n, std::size_t k) {
  std::vector<std::size_t> out;
  out.reserve(k);
  // round_half_up(i*(n-1)/(k-1)) in exact integer arithmetic.
  const std::size_t den = 2 * (k - 1);
  for (std::size_t i = 0; i < k; ++i) out.push_back((2 * i * (n - 1) + (k - 1)) / den);
  return out;
}

ClipSpec sample_clip(const TrackKey& key, const FrameBuffer& buffer, std::size_t k, const ClipGeometry& geometry) {
  if (buffer.empty()) throw EmptyBuffer();
  const auto& frames = buffer.frames();
  const std::size_t n = frames.size();

  std::vector<std::size_t> indices;
  if (n < k || k < 2) {
    indices.resize(std::min(n, std::max<std::size_t>(k, 1)));
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
  } else {
    indices = even_sample_indices(n, k);
  }

  ClipSpec clip;
  clip.key = key;
  clip.frames.reserve(indices.size());
  for (std::size_t idx : indices) {
    const BufferedFrame& f = frames[idx];
    clip.frames.push_back(ClipFrame{
        f.timestamp_ms, f.image_ref,
        crop_with_padding(f.person_bbox, geometry.frame_width, geometry.frame_height, geometry.pad_frac),
        f.person_bbox, f.keypoints});
  }
  clip.label_total = clip.frames.size();
  return clip;
}

BBox crop_with_padding(const BBox& bbox, double frame_width, double frame_height, double pad_frac) {
  const double px = pad_frac * bbox.width();
  const double py = pad_frac * bbox.height();
  return BBox{std::clamp(bbox.x1 - px, 0.0, frame_width), std::clamp(bbox.y1 - py, 0.0, frame_height),
              std::clamp(bbox.x2 + px, 0.0, frame_width), std::clamp(bbox.y2 + py, 0.0, frame_height)};
}

std::optional<FaceDisc> face_disc(const Keypoints& keypoints, double conf_gate) {
  std::vector<Point> head;
  for (std::size_t i = coco::kNose; i <= 4; ++i) {
    if (keypoints[i].conf > conf_gate) head.push_back({keypoints[i].x, keypoints[i].y});
  }
  if (head.size() < 2) return std::nullopt;

  Point c{};
  for (const Point& p : head) {
    c.x += p.x;
    c.y += p.y;
  }
  c.x /= static_cast<double>(head.size());
  c.y /= static_cast<double>(head.size());

  double spread = 0.0;
  for (std::size_t i = 0; i < head.size(); ++i) {
    for (std::size_t j = i + 1; j < head.size(); ++j) {
      spread = std::max(spread, std::hypot(head[i].x - head[j].x, head[i].y - head[j].y));
    }
  }
  return FaceDisc{c, std::max(1.5 * spread, kMinFaceRadius)};
}

Image obfuscate_faces(Image image, const Keypoints& keypoints, double conf_gate) {
  const auto disc = face_disc(keypoints, conf_gate);
  if (!disc || image.width <= 0 || image.height <= 0) return image;

  auto inside = [&](int x, int y) {
    const double dx = x + 0.5 - disc->center.x;
    const double dy = y + 0.5 - disc->center.y;
    return dx * dx + dy * dy <= disc->radius * disc->radius;
  };

  const int x0 = std::max(0, static_cast<int>(std::floor(disc->center.x - disc->radius)));
  const int y0 = std::max(0, static_cast<int>(std::floor(disc->center.y - disc->radius)));
  const int x1 = std::min(image.width - 1, static_cast<int>(std::ceil(disc->center.x + disc->radius)));
  const int y1 = std::min(image.height - 1, static_cast<int>(std::ceil(disc->center.y + disc->radius)));
  if (x0 > x1 || y0 > y1) return image;

  const int channels = image.channels;
  for (int by = (y0 / kPixelationBlock) * kPixelationBlock; by <= y1; by += kPixelationBlock) {
    for (int bx = (x0 / kPixelationBlock) * kPixelationBlock; bx <= x1; bx += kPixelationBlock) {
      const int ex = std::min(bx + kPixelationBlock, image.width);
      const int ey = std::min(by + kPixelationBlock, image.height);
      std::vector<std::uint64_t> sum(static_cast<std::size_t>(channels), 0);
      std::uint64_t count = 0;
      for (int y = by; y < ey; ++y) {
        for (int x = bx; x < ex; ++x) {
          if (!inside(x, y)) continue;
          const std::uint8_t* px = image.at(x, y);
          for (int c = 0; c < channels; ++c) sum[c] += px[c];
          ++count;
        }
      }
      if (count == 0) continue;
      std::vector<std::uint8_t> mean(static_cast<std::size_t>(channels));
      for (int c = 0; c < channels; ++c) mean[c] = static_cast<std::uint8_t>((sum[c] + count / 2) / count);
      for (int y = by; y < ey; ++y) {
        for (int x = bx; x < ex; ++x) {
          if (!inside(x, y)) continue;
          std::copy(mean.begin(), mean.end(), image.at(x, y));
        }
      }
    }
  }
  return image;
}

}  // namespace paza
