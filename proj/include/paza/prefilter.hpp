// Multi-signal suspicion pre-filter: a tracked person becomes a VLM candidate
// when dwell >= tau_d and at least one of near_obj, hand_body, pickup holds,
// subject to a per-person cooldown.
#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "paza/event_model.hpp"
#include "paza/track_registry.hpp"

namespace paza {

struct PrefilterConfig {
  double tau_d_s = 3.0;
  double rho = 0.3;
  double theta_h = 0.3;
  double tau_c_s = 10.0;
  int rate_limit_per_min = 10;
  int clip_frames_k = 5;
  double buffer_horizon_s = 5.0;
  double keypoint_conf_gate = 0.2;
  double pickup_persist_s = 10.0;

  // Throws std::invalid_argument naming the first bad field.
  void validate() const;

  std::uint64_t tau_d_ms() const;
  std::uint64_t tau_c_ms() const;
  std::uint64_t pickup_persist_ms() const;
};

struct NearObjectResult {
  bool near = false;
  double min_distance = std::numeric_limits<double>::infinity();
  std::optional<std::uint16_t> nearest_class;
};

// Center-to-center distance from the person box to each non-person detection,
// compared against rho * diagonal.
NearObjectResult near_object(const BBox& person_bbox, std::span<const Detection> detections, double rho = 0.3);

// Non-person classes within rho * diagonal of the person center.
std::set<std::uint16_t> nearby_classes(const BBox& person_bbox, std::span<const Detection> detections,
                                       double rho = 0.3);

struct HandBodyResult {
  bool toward_body = false;
  std::optional<Point> body_center;
  double min_wrist_distance = std::numeric_limits<double>::infinity();
};

HandBodyResult hand_body(const Keypoints& keypoints, const BBox& person_bbox, const PrefilterConfig& cfg);

inline bool hand_toward_body(const Keypoints& keypoints, const BBox& person_bbox, const PrefilterConfig& cfg) {
  return hand_body(keypoints, person_bbox, cfg).toward_body;
}

// Records nearby_now as the new previous set and (re)arms the pickup window on a
// count drop or a vanished class. Returns whether pickup is active at now_ms.
bool update_pickup(TrackState& track, const std::set<std::uint16_t>& nearby_now, std::uint64_t now_ms,
                   const PrefilterConfig& cfg);

struct SignalReport {
  bool near_obj = false;
  bool hand_body = false;
  bool pickup = false;
  double dwell_s = 0.0;

  // Evidence.
  double object_distance = std::numeric_limits<double>::infinity();
  double object_threshold = 0.0;
  std::optional<std::uint16_t> nearest_class;
  double wrist_distance = std::numeric_limits<double>::infinity();
  double wrist_threshold = 0.0;
  std::vector<std::uint16_t> nearby_classes;
  std::optional<std::uint64_t> pickup_active_until_ms;

  bool any_behavior() const { return near_obj || hand_body || pickup; }
};

enum class HoldReason { kDwellShort, kNoSignal, kCooldown };

std::string to_string(HoldReason reason);

struct Fire {
  SignalReport report;
};
struct Hold {
  HoldReason reason;
  SignalReport report;
};
using TriggerDecision = std::variant<Fire, Hold>;

inline bool fired(const TriggerDecision& d) { return std::holds_alternative<Fire>(d); }

// Computes the three signals for one observation and advances the track's
// pickup memory.
SignalReport assess_signals(const PersonObservation& obs, const PrefilterConfig& cfg);

// Applies the trigger predicate to an already assessed report. On Fire, stamps
// the track's cooldown with now_ms.
TriggerDecision decide_trigger(TrackState& track, SignalReport report, const PrefilterConfig& cfg,
                               std::uint64_t now_ms);

TriggerDecision evaluate_trigger(const PersonObservation& obs, const PrefilterConfig& cfg, std::uint64_t now_ms);

// Unit of work handed to the VLM gateway on Fire.
struct VlmCandidate {
  std::uint64_t id = 0;
  TrackKey key;
  std::uint64_t created_ms = 0;
  SignalReport signal_report;
  ClipSpec clip;
  // HTTP attempts made so far.
  int attempts = 0;
  // Set only by test harnesses so a scripted mock can key its responses.
  std::optional<std::string> test_tag;
};

}  // namespace paza
