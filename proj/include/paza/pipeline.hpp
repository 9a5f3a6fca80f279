// Event-driven orchestration: registry -> pre-filter -> clip -> gateway ->
// alert store, on a clock derived from event timestamps.
#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "paza/alert_store.hpp"
#include "paza/analytics.hpp"
#include "paza/clip_builder.hpp"
#include "paza/image_io.hpp"
#include "paza/prefilter.hpp"
#include "paza/simulator.hpp"
#include "paza/track_registry.hpp"
#include "paza/vlm_gateway.hpp"

namespace paza {

inline constexpr std::uint64_t kRetryTickMs = 1'000;

struct PipelineConfig {
  PrefilterConfig prefilter;
  GatewayConfig gateway;
  ClipGeometry geometry;
  double track_retention_s = 10.0;
  double alert_retention_h = 24.0;
  int nominal_fps = 10;
  // Dispatch on a worker pool of gateway.max_in_flight threads (serve mode).
  bool async_dispatch = false;

  void validate() const;
  RegistryConfig registry() const;
};

enum class CandidateFate { kVerdict, kExpired, kExhausted, kDropped };

std::string to_string(CandidateFate f);

struct CandidateOutcome {
  std::uint64_t candidate_id = 0;
  TrackKey key;
  std::uint64_t created_ms = 0;
  std::uint64_t resolved_ms = 0;
  CandidateFate fate = CandidateFate::kVerdict;
  std::optional<VerdictCategory> category;
  int attempts = 0;
  std::optional<std::string> alert_id;
  std::optional<std::string> error;
};

nlohmann::json to_json(const CandidateOutcome& o);

// Returns the test tag for a track, or nullopt. Test harnesses only.
using Tagger = std::function<std::optional<std::string>(const TrackKey&)>;

class Pipeline {
 public:
  Pipeline(PipelineConfig cfg, std::shared_ptr<VlmTransport> transport, std::shared_ptr<AlertStore> store = nullptr,
           std::shared_ptr<const FileImageSource> images = nullptr);
  ~Pipeline();

  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  void set_tagger(Tagger tagger);

  // Ingests one event. Retry ticks for every second boundary crossed run
  // before the event's own trigger decisions.
  void ingest(const FrameEvent& event);

  // Parses and ingests one JSONL line. Returns false on a parse failure,
  // which is counted rather than thrown.
  bool ingest_line(std::string_view line);

  // Moves the clock forward without an event.
  void advance(std::uint64_t now_ms);

  // Ticks the retry queue until nothing is queued or in flight. Returns the
  // final clock value.
  std::uint64_t drain();

  // Blocks until no async dispatch is running.
  void wait_idle();

  RunStats stats() const;
  std::vector<FireRecord> fires() const;
  std::vector<CandidateOutcome> outcomes() const;
  std::optional<std::uint64_t> clock_ms() const;
  std::optional<std::uint64_t> first_event_ms() const;
  std::size_t pending() const;

  VlmGateway& gateway() { return gateway_; }
  const VlmGateway& gateway() const { return gateway_; }
  AlertStore* store() { return store_.get(); }
  const AlertStore* store() const { return store_.get(); }
  const PipelineConfig& config() const { return cfg_; }

 private:
  std::vector<std::uint64_t> advance_locked(std::uint64_t now_ms);
  void run_ticks(const std::vector<std::uint64_t>& ticks);
  void dispatch(VlmCandidate candidate);
  void handle_submit(const VlmCandidate& candidate, SubmitResult result);
  void handle_tick(std::uint64_t at_ms, std::vector<RetryOutcome> outcomes);
  void resolve_verdict_locked(const VlmCandidate& candidate, const Verdict& verdict, std::uint64_t now_ms,
                              int attempts, std::vector<Image> snapshots);
  void resolve_failure_locked(const VlmCandidate& candidate, CandidateFate fate, std::uint64_t now_ms, int attempts,
                              std::optional<std::string> error);
  std::vector<Image> snapshots_for(const VlmCandidate& candidate) const;
  void worker_loop();

  PipelineConfig cfg_;
  std::shared_ptr<AlertStore> store_;
  std::shared_ptr<const FileImageSource> images_;
  VlmGateway gateway_;
  Tagger tagger_;

  mutable std::mutex mu_;
  TrackRegistry registry_;
  RunStats stats_;
  std::vector<FireRecord> fires_;
  std::vector<CandidateOutcome> outcomes_;
  std::optional<std::uint64_t> clock_ms_;
  std::optional<std::uint64_t> first_event_ms_;
  std::uint64_t next_candidate_id_ = 1;
  std::uint64_t unresolved_ = 0;

  // Async dispatch pool.
  std::mutex pool_mu_;
  std::condition_variable pool_cv_;
  std::condition_variable idle_cv_;
  std::deque<VlmCandidate> jobs_;
  std::size_t running_ = 0;
  bool stopping_ = false;
  std::vector<std::thread> workers_;
};

}  // namespace paza
