#include "paza/prefilter.hpp"

#include <cmath>

namespace paza {
namespace {

std::uint64_t seconds_to_ms(double s) { return static_cast<std::uint64_t>(std::llround(s * 1000.0)); }

double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

}  // namespace

void PrefilterConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(name) + " must be positive");
  };
  positive(tau_d_s, "tau_d_s");
  positive(rho, "rho");
  positive(theta_h, "theta_h");
  positive(tau_c_s, "tau_c_s");
  positive(buffer_horizon_s, "buffer_horizon_s");
  positive(keypoint_conf_gate, "keypoint_conf_gate");
  positive(pickup_persist_s, "pickup_persist_s");
  if (rho > 1.0) throw std::invalid_argument("rho must lie in (0,1]");
  if (theta_h > 1.0) throw std::invalid_argument("theta_h must lie in (0,1]");
  if (rate_limit_per_min < 1) throw std::invalid_argument("rate_limit_per_min must be positive");
  if (clip_frames_k < 2) throw std::invalid_argument("clip_frames_k must be at least 2");
}

std::uint64_t PrefilterConfig::tau_d_ms() const { return seconds_to_ms(tau_d_s); }
std::uint64_t PrefilterConfig::tau_c_ms() const { return seconds_to_ms(tau_c_s); }
std::uint64_t PrefilterConfig::pickup_persist_ms() const { return seconds_to_ms(pickup_persist_s); }

NearObjectResult near_object(const BBox& person_bbox, std::span<const Detection> detections, double rho) {
  NearObjectResult r;
  const Point c = person_bbox.center();
  for (const Detection& d : detections) {
    if (d.class_id == kPersonClass) continue;
    const double dist = distance(c, d.bbox.center());
    if (dist < r.min_distance) {
      r.min_distance = dist;
      r.nearest_class = d.class_id;
    }
  }
  r.near = r.min_distance <= rho * person_bbox.diagonal();
  return r;
}

std::set<std::uint16_t> nearby_classes(const BBox& person_bbox, std::span<const Detection> detections, double rho) {
  std::set<std::uint16_t> out;
  const Point c = person_bbox.center();
  const double radius = rho * person_bbox.diagonal();
  for (const Detection& d : detections) {
    if (d.class_id == kPersonClass) continue;
    if (distance(c, d.bbox.center()) <= radius) out.insert(d.class_id);
  }
  return out;
}

HandBodyResult hand_body(const Keypoints& keypoints, const BBox& person_bbox, const PrefilterConfig& cfg) {
  HandBodyResult r;
  const double gate = cfg.keypoint_conf_gate;

  Point center{};
  int torso = 0;
  for (std::size_t i : {coco::kLeftShoulder, coco::kRightShoulder, coco::kLeftHip, coco::kRightHip}) {
    if (keypoints[i].conf > gate) {
      center.x += keypoints[i].x;
      center.y += keypoints[i].y;
      ++torso;
    }
  }
  if (torso < 2) return r;
  center.x /= torso;
  center.y /= torso;
  r.body_center = center;

  const double threshold = cfg.theta_h * person_bbox.height();
  for (std::size_t i : {coco::kLeftWrist, coco::kRightWrist}) {
    if (keypoints[i].conf <= gate) continue;
    const double d = distance({keypoints[i].x, keypoints[i].y}, center);
    r.min_wrist_distance = std::min(r.min_wrist_distance, d);
  }
  r.toward_body = r.min_wrist_distance <= threshold;
  return r;
}

bool update_pickup(TrackState& track, const std::set<std::uint16_t>& nearby_now, std::uint64_t now_ms,
                   const PrefilterConfig& cfg) {
  const auto& prev = track.nearby_classes_prev;
  bool triggered = nearby_now.size() < prev.size();
  if (!triggered) {
    for (std::uint16_t cls : prev) {
      if (!nearby_now.contains(cls)) {
        triggered = true;
        break;
      }
    }
  }
  if (triggered) track.pickup_active_until_ms = now_ms + cfg.pickup_persist_ms();
  track.nearby_classes_prev = nearby_now;
  return track.pickup_active_until_ms && now_ms <= *track.pickup_active_until_ms;
}

std::string to_string(HoldReason reason) {
  switch (reason) {
    case HoldReason::kDwellShort:
      return "dwell_short";
    case HoldReason::kNoSignal:
      return "no_signal";
    case HoldReason::kCooldown:
      return "cooldown";
  }
  return "unknown";
}

SignalReport assess_signals(const PersonObservation& obs, const PrefilterConfig& cfg) {
  const TrackedPerson& person = *obs.person;
  const std::span<const Detection> dets(*obs.detections);

  SignalReport rep;
  rep.dwell_s = dwell_seconds(*obs.track, obs.timestamp_ms);

  const NearObjectResult near = near_object(person.bbox, dets, cfg.rho);
  rep.near_obj = near.near;
  rep.object_distance = near.min_distance;
  rep.object_threshold = cfg.rho * person.bbox.diagonal();
  rep.nearest_class = near.nearest_class;

  if (person.keypoints) {
    const HandBodyResult hb = hand_body(*person.keypoints, person.bbox, cfg);
    rep.hand_body = hb.toward_body;
    rep.wrist_distance = hb.min_wrist_distance;
  }
  rep.wrist_threshold = cfg.theta_h * person.bbox.height();

  const std::set<std::uint16_t> nearby = nearby_classes(person.bbox, dets, cfg.rho);
  rep.nearby_classes.assign(nearby.begin(), nearby.end());
  rep.pickup = update_pickup(*obs.track, nearby, obs.timestamp_ms, cfg);
  rep.pickup_active_until_ms = obs.track->pickup_active_until_ms;
  return rep;
}

TriggerDecision decide_trigger(TrackState& track, SignalReport report, const PrefilterConfig& cfg,
                               std::uint64_t now_ms) {
  const std::uint64_t dwell_ms = now_ms > track.first_seen_ms ? now_ms - track.first_seen_ms : 0;
  report.dwell_s = static_cast<double>(dwell_ms) / 1000.0;
  if (dwell_ms < cfg.tau_d_ms()) return Hold{HoldReason::kDwellShort, std::move(report)};
  if (!report.any_behavior()) return Hold{HoldReason::kNoSignal, std::move(report)};
  if (track.last_vlm_dispatch_ms) {
    const std::uint64_t last = *track.last_vlm_dispatch_ms;
    const std::uint64_t elapsed = now_ms > last ? now_ms - last : 0;
    if (elapsed < cfg.tau_c_ms()) return Hold{HoldReason::kCooldown, std::move(report)};
  }
  track.last_vlm_dispatch_ms = now_ms;
  return Fire{std::move(report)};
}

TriggerDecision evaluate_trigger(const PersonObservation& obs, const PrefilterConfig& cfg, std::uint64_t now_ms) {
  return decide_trigger(*obs.track, assess_signals(obs, cfg), cfg, now_ms);
}

}  // namespace paza
