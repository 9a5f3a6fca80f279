#include "paza/replay.hpp"

#include <chrono>
#include <memory>

namespace paza {
namespace {

using Clock = std::chrono::steady_clock;

RunReport finish(Pipeline& pipeline, const ReplayOptions& opts, Clock::time_point started) {
  if (opts.drain) pipeline.drain();
  pipeline.wait_idle();
  RunReport r = make_report(pipeline, opts.truth);
  if (opts.include_wall_clock) {
    r.wall_clock_ms = std::chrono::duration<double, std::milli>(Clock::now() - started).count();
  }
  return r;
}

}  // namespace

nlohmann::json to_json(const RunReport& r) {
  nlohmann::json j = {{"stats", to_json(r.stats)},
                      {"reduction_factor", r.stats.reduction_factor()},
                      {"alerts_by_category", r.stats.alerts_by_category},
                      {"rate_limit_skips", r.stats.skips},
                      {"candidates", r.candidates},
                      {"outcomes_by_fate", r.outcomes_by_fate},
                      {"pending_at_end", r.pending_at_end},
                      {"max_queue_len", r.max_queue_len},
                      {"errors_by_kind", r.errors_by_kind},
                      {"alerts_in_store", r.alerts_in_store},
                      {"virtual_duration_ms", r.virtual_duration_ms}};
  j["trigger_eval"] = r.trigger ? to_json(*r.trigger) : nlohmann::json(nullptr);
  if (r.wall_clock_ms) j["wall_clock_ms"] = *r.wall_clock_ms;
  return j;
}

RunReport make_report(const Pipeline& pipeline, const std::optional<GroundTruth>& truth) {
  RunReport r;
  r.stats = pipeline.stats();
  const auto outcomes = pipeline.outcomes();
  for (const auto& o : outcomes) ++r.outcomes_by_fate[to_string(o.fate)];
  r.pending_at_end = pipeline.pending();
  r.candidates = outcomes.size() + r.pending_at_end;
  const GatewayStats g = pipeline.gateway().stats();
  r.max_queue_len = g.max_queue_len;
  r.errors_by_kind = g.errors_by_kind;
  if (const AlertStore* store = pipeline.store()) r.alerts_in_store = store->size();
  if (auto first = pipeline.first_event_ms(), last = pipeline.clock_ms(); first && last) {
    r.virtual_duration_ms = *last - *first;
  }
  if (truth) r.trigger = trigger_eval(pipeline.fires(), *truth);
  return r;
}

RunReport replay_events(Pipeline& pipeline, const std::vector<FrameEvent>& events, const ReplayOptions& opts) {
  const auto started = Clock::now();
  for (const FrameEvent& ev : events) pipeline.ingest(ev);
  return finish(pipeline, opts, started);
}

RunReport replay_stream(Pipeline& pipeline, std::istream& in, const ReplayOptions& opts) {
  const auto started = Clock::now();
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    pipeline.ingest_line(line);
  }
  return finish(pipeline, opts, started);
}

Tagger truth_tagger(GroundTruth truth) {
  auto shared = std::make_shared<const GroundTruth>(std::move(truth));
  return [shared](const TrackKey& key) -> std::optional<std::string> {
    if (const ShopperTruth* s = shared->find(key)) return to_string(s->behavior);
    return std::nullopt;
  };
}

}  // namespace paza
