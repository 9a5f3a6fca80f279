// Stateless per-person signal evaluation over whole traces.
//
// compute_signals_serial is the reference; compute_signals is the OpenMP
// version and must produce identical output. Both only cover the memoryless
// signals (near_obj, hand_body, nearby class set); pickup and dwell depend on
// track history and stay in the sequential pipeline.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "paza/event_model.hpp"
#include "paza/prefilter.hpp"

namespace paza {

struct PersonSignals {
  std::uint64_t track_id = 0;
  bool near_obj = false;
  bool hand_body = false;
  double object_distance = 0.0;
  double wrist_distance = 0.0;
  // Bit c set when class c (< 64) is nearby; classes >= 64 fold into bit 63.
  std::uint64_t nearby_mask = 0;

  bool operator==(const PersonSignals&) const = default;
};

struct SignalProfile {
  std::uint64_t frames = 0;
  std::uint64_t person_frames = 0;
  std::uint64_t near_obj = 0;
  std::uint64_t hand_body = 0;
  std::uint64_t either = 0;

  bool operator==(const SignalProfile&) const = default;
};

// Output is flattened in (frame, person) order; offsets[i] is the first entry
// of frame i and offsets.back() == total persons.
struct TraceSignals {
  std::vector<PersonSignals> persons;
  std::vector<std::size_t> offsets;

  bool operator==(const TraceSignals&) const = default;
};

TraceSignals compute_signals_serial(std::span<const FrameEvent> frames, const PrefilterConfig& cfg);
TraceSignals compute_signals(std::span<const FrameEvent> frames, const PrefilterConfig& cfg);

SignalProfile profile_serial(std::span<const FrameEvent> frames, const PrefilterConfig& cfg);
SignalProfile profile(std::span<const FrameEvent> frames, const PrefilterConfig& cfg);

int max_threads();

}  // namespace paza
