// Deterministic synthetic shopper traces and a scriptable mock VLM.
#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "paza/analytics.hpp"
#include "paza/event_model.hpp"
#include "paza/track_key.hpp"
#include "paza/vlm_gateway.hpp"

namespace paza {

enum class ShopperBehavior { kPassThrough, kBrowse, kPickupNoConceal, kConceal };

std::string to_string(ShopperBehavior b);
std::optional<ShopperBehavior> behavior_from_string(std::string_view s);

// Explicit shopper for hand-built scenarios; bypasses Poisson arrivals.
struct ShopperPlan {
  int camera = 0;
  std::uint64_t enter_ms = 0;
  ShopperBehavior behavior = ShopperBehavior::kPassThrough;
  // Shelf slot to visit; chosen by the generator when unset.
  std::optional<int> slot;
};

struct ScenarioConfig {
  int cameras = 4;
  int fps = 10;
  double duration_s = 60.0;
  // Mean arrivals per camera per minute.
  double arrival_rate_per_min = 0.25;
  double browse_fraction = 0.1;
  // Conditional on browsing.
  double pickup_fraction = 0.5;
  // Conditional on pickup.
  double conceal_fraction = 0.3;
  std::uint64_t seed = 1;
  int frame_width = 1280;
  int frame_height = 720;
  bool emit_keypoints = true;
  std::vector<ShopperPlan> shoppers;

  void validate() const;
};

struct ShopperTruth {
  TrackKey key;
  ShopperBehavior behavior = ShopperBehavior::kPassThrough;
  std::optional<std::uint64_t> conceal_time_ms;
  std::uint64_t enter_ms = 0;
  std::uint64_t exit_ms = 0;
};

struct GroundTruth {
  std::vector<ShopperTruth> shoppers;

  const ShopperTruth* find(const TrackKey& key) const;
  std::size_t count(ShopperBehavior b) const;
};

struct Trace {
  std::vector<FrameEvent> events;
  GroundTruth truth;
};

Trace generate_trace(const ScenarioConfig& cfg);

// Writes {path} (FrameEvent JSONL) and {path}.truth.jsonl.
void write_trace(const Trace& trace, const std::filesystem::path& path);
std::string truth_path_for(const std::filesystem::path& trace_path);
GroundTruth read_truth(const std::filesystem::path& truth_path);
nlohmann::json to_json(const ShopperTruth& t);

// Body geometry shared by the generator and tests: keypoints for a standing
// person inside bbox, wrists either resting or pressed to the torso.
Keypoints body_keypoints(const BBox& bbox, bool hands_to_torso);

// ---------------------------------------------------------------------------

struct FireRecord {
  TrackKey key;
  std::uint64_t time_ms = 0;
};

struct TriggerEval {
  std::size_t concealers = 0;
  std::size_t concealers_fired = 0;
  std::size_t fires = 0;
  std::size_t fires_on_concealers = 0;
  Ratio trigger_recall;
  Ratio trigger_precision;
};

TriggerEval trigger_eval(const std::vector<FireRecord>& fires, const GroundTruth& truth);
nlohmann::json to_json(const TriggerEval& e);

// ---------------------------------------------------------------------------

enum class MockFault { kNone, kHttp500, kHttp429, kTimeout, kMalformed };

std::string to_string(MockFault f);
std::optional<MockFault> mock_fault_from_string(std::string_view s);

struct MockRule {
  // Tag value, or "*" for any request.
  std::string match = "*";
  std::string respond;
  std::uint64_t latency_ms = 0;
  MockFault fault = MockFault::kNone;
  // Matches with this probability (deterministic per request number).
  double probability = 1.0;
  // Stops matching after this many uses.
  std::optional<std::uint64_t> times;
};

struct MockScript {
  std::vector<MockRule> rules;
  std::uint64_t seed = 7;

  // Requires a trailing catch-all rule ("*", probability 1, unlimited).
  void validate() const;
};

MockScript mock_script_from_json(const nlohmann::json& j);
MockScript load_mock_script(const std::filesystem::path& path);

// Verdict text for a behavior used by the default script.
MockScript default_mock_script();

struct MockDecision {
  MockFault fault = MockFault::kNone;
  std::string content;
  std::uint64_t latency_ms = 0;
  std::size_t rule_index = 0;
};

struct RecordedRequest {
  std::string body;
  std::map<std::string, std::string> headers;
  std::optional<std::string> tag;
};

// Rule selection shared by the in-process and HTTP mocks. Thread-safe.
class MockResponder {
 public:
  explicit MockResponder(MockScript script);

  MockDecision decide(const std::optional<std::string>& tag);
  void record(RecordedRequest request);

  std::vector<RecordedRequest> requests() const;
  std::size_t request_count() const;

  static std::string completion_body(const std::string& content, const std::string& model);

 private:
  MockScript script_;
  mutable std::mutex mu_;
  std::uint64_t counter_ = 0;
  std::vector<std::uint64_t> uses_;
  std::vector<RecordedRequest> requests_;
};

// In-process transport; faults are immediate and latency is not slept.
class ScriptedTransport final : public VlmTransport {
 public:
  explicit ScriptedTransport(MockScript script) : responder_(std::make_shared<MockResponder>(std::move(script))) {}

  TransportResult post(std::string_view path, const std::string& body,
                       const std::map<std::string, std::string>& headers) override;

  MockResponder& responder() { return *responder_; }

 private:
  std::shared_ptr<MockResponder> responder_;
};

// HTTP mock serving POST /v1/chat/completions on 127.0.0.1.
class MockVlmServer {
 public:
  explicit MockVlmServer(MockScript script, std::uint64_t timeout_sleep_ms = 2'000);
  ~MockVlmServer();

  MockVlmServer(const MockVlmServer&) = delete;
  MockVlmServer& operator=(const MockVlmServer&) = delete;

  // port 0 picks an ephemeral port. Returns the bound port.
  int start(int port = 0, const std::string& host = "127.0.0.1");
  void stop();
  std::string url() const;

  MockResponder& responder() { return *responder_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::shared_ptr<MockResponder> responder_;
  std::uint64_t timeout_sleep_ms_;
  int port_ = 0;
  std::string host_;
};

}  // namespace paza
