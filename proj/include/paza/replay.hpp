// Trace replay on the virtual clock and the RunReport it produces.
#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "paza/pipeline.hpp"

namespace paza {

struct ReplayOptions {
  // Keep ticking after the last event until every candidate is terminal.
  bool drain = false;
  // Wall-clock fields break byte stability, so they are opt-in.
  bool include_wall_clock = false;
  std::optional<GroundTruth> truth;
};

struct RunReport {
  RunStats stats;
  std::optional<TriggerEval> trigger;
  std::uint64_t candidates = 0;
  std::map<std::string, std::uint64_t> outcomes_by_fate;
  std::uint64_t pending_at_end = 0;
  std::uint64_t max_queue_len = 0;
  std::map<std::string, std::uint64_t> errors_by_kind;
  std::uint64_t alerts_in_store = 0;
  std::uint64_t virtual_duration_ms = 0;
  std::optional<double> wall_clock_ms;
};

nlohmann::json to_json(const RunReport& r);

// Snapshot of a pipeline's state as a report (used by replay and /api/stats).
RunReport make_report(const Pipeline& pipeline, const std::optional<GroundTruth>& truth);

RunReport replay_events(Pipeline& pipeline, const std::vector<FrameEvent>& events, const ReplayOptions& opts);

// Reads FrameEvent JSONL; malformed lines are counted in stats.parse_errors.
RunReport replay_stream(Pipeline& pipeline, std::istream& in, const ReplayOptions& opts);

// Test-mode tagger keyed by ground-truth behavior.
Tagger truth_tagger(GroundTruth truth);

}  // namespace paza
