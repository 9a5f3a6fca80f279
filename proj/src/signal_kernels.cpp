#include "paza/signal_kernels.hpp"

#include <cmath>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace paza {
namespace {

PersonSignals evaluate_person(const TrackedPerson& person, std::span<const Detection> dets,
                              const PrefilterConfig& cfg) {
  PersonSignals s;
  s.track_id = person.track_id;
  const Point c = person.bbox.center();
  const double radius = cfg.rho * person.bbox.diagonal();
  double best = std::numeric_limits<double>::infinity();
  for (const Detection& d : dets) {
    if (d.class_id == kPersonClass) continue;
    const Point dc = d.bbox.center();
    const double dist = std::hypot(c.x - dc.x, c.y - dc.y);
    best = std::min(best, dist);
    if (dist <= radius) s.nearby_mask |= std::uint64_t{1} << std::min<std::uint16_t>(d.class_id, 63);
  }
  s.object_distance = best;
  s.near_obj = best <= radius;
  s.wrist_distance = std::numeric_limits<double>::infinity();
  if (person.keypoints) {
    const HandBodyResult hb = hand_body(*person.keypoints, person.bbox, cfg);
    s.hand_body = hb.toward_body;
    s.wrist_distance = hb.min_wrist_distance;
  }
  return s;
}

std::vector<std::size_t> frame_offsets(std::span<const FrameEvent> frames) {
  std::vector<std::size_t> offsets(frames.size() + 1, 0);
  for (std::size_t i = 0; i < frames.size(); ++i) offsets[i + 1] = offsets[i] + frames[i].tracks.size();
  return offsets;
}

void accumulate(SignalProfile& p, const PersonSignals& s) {
  ++p.person_frames;
  p.near_obj += s.near_obj;
  p.hand_body += s.hand_body;
  p.either += (s.near_obj || s.hand_body);
}

}  // namespace

TraceSignals compute_signals_serial(std::span<const FrameEvent> frames, const PrefilterConfig& cfg) {
  TraceSignals out;
  out.offsets = frame_offsets(frames);
  out.persons.reserve(out.offsets.back());
  for (const FrameEvent& f : frames) {
    for (const TrackedPerson& p : f.tracks) out.persons.push_back(evaluate_person(p, f.detections, cfg));
  }
  return out;
}

TraceSignals compute_signals(std::span<const FrameEvent> frames, const PrefilterConfig& cfg) {
  TraceSignals out;
  out.offsets = frame_offsets(frames);
  out.persons.resize(out.offsets.back());
  const auto n = static_cast<std::ptrdiff_t>(frames.size());
#pragma omp parallel for schedule(dynamic, 64)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const FrameEvent& f = frames[static_cast<std::size_t>(i)];
    std::size_t slot = out.offsets[static_cast<std::size_t>(i)];
    for (const TrackedPerson& p : f.tracks) out.persons[slot++] = evaluate_person(p, f.detections, cfg);
  }
  return out;
}

SignalProfile profile_serial(std::span<const FrameEvent> frames, const PrefilterConfig& cfg) {
  SignalProfile p;
  p.frames = frames.size();
  for (const FrameEvent& f : frames) {
    for (const TrackedPerson& person : f.tracks) accumulate(p, evaluate_person(person, f.detections, cfg));
  }
  return p;
}

SignalProfile profile(std::span<const FrameEvent> frames, const PrefilterConfig& cfg) {
  std::uint64_t person_frames = 0, near = 0, hand = 0, either = 0;
  const auto n = static_cast<std::ptrdiff_t>(frames.size());
#pragma omp parallel for schedule(dynamic, 64) reduction(+ : person_frames, near, hand, either)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const FrameEvent& f = frames[static_cast<std::size_t>(i)];
    for (const TrackedPerson& person : f.tracks) {
      const PersonSignals s = evaluate_person(person, f.detections, cfg);
      ++person_frames;
      near += s.near_obj;
      hand += s.hand_body;
      either += (s.near_obj || s.hand_body);
    }
  }
  return SignalProfile{frames.size(), person_frames, near, hand, either};
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace paza
