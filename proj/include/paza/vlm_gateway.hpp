// Model-agnostic VLM client over the OpenAI chat-completions wire format.
//
// The gateway never reads a clock on its own: every entry point takes now_ms so
// replay stays deterministic. Only Verdict::latency_ms is measured wall time.
#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "paza/clip_builder.hpp"
#include "paza/prefilter.hpp"

namespace paza {

inline constexpr std::string_view kChatCompletionsPath = "/v1/chat/completions";
inline constexpr std::string_view kTestTagHeader = "X-Paza-Test-Tag";

struct GatewayConfig {
  std::string api_url = "http://127.0.0.1:8000";
  std::string model_name = "gemma-4";
  std::optional<std::string> api_key;
  int rate_limit_per_min = 10;
  int retry_max = 2;
  double retry_window_s = 30.0;
  std::size_t queue_cap = 100;
  double request_timeout_s = 30.0;
  double temperature = 0.1;
  int max_tokens = 300;
  int max_in_flight = 4;
  int jpeg_quality = 80;
  int max_image_side = 768;
  // Live mode refuses clips whose frames carry no pixels.
  bool require_pixels = false;

  void validate() const;
  std::uint64_t retry_window_ms() const;
};

enum class VerdictCategory { kConfirmed, kUncertain, kNormal, kSkipped };

std::string to_string(VerdictCategory c);
std::optional<VerdictCategory> category_from_string(std::string_view s);

struct Verdict {
  VerdictCategory category = VerdictCategory::kNormal;
  int confidence = 0;
  std::string description;
  std::string raw;
  std::uint64_t latency_ms = 0;

  static Verdict skipped() { return Verdict{VerdictCategory::kSkipped, 0, {}, {}, 0}; }
  bool alerts() const { return category == VerdictCategory::kConfirmed || category == VerdictCategory::kUncertain; }
};

class VerdictParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Band midpoints used when a response names a category but no confidence.
int band_midpoint(VerdictCategory c);

// Structured pass first (line-leading or "verdict:"-prefixed token plus
// "confidence <int>"), keyword fallback second. Throws VerdictParseError when
// no category keyword appears anywhere.
Verdict parse_verdict(std::string_view text);

// Sliding 60 s window. Thread-safe.
class RateLimiter {
 public:
  explicit RateLimiter(int limit_per_window, std::uint64_t window_ms = 60'000);

  // Grants and records a permit iff fewer than `limit` permits lie in
  // (now_ms - window, now_ms].
  bool try_acquire(std::uint64_t now_ms);
  std::size_t in_window(std::uint64_t now_ms) const;
  int limit() const { return limit_; }

 private:
  void prune(std::uint64_t now_ms) const;

  int limit_;
  std::uint64_t window_ms_;
  mutable std::mutex mu_;
  mutable std::deque<std::uint64_t> dispatch_times_;
};

class MissingPixels : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Supplies the base64 JPEG payload for one clip frame, or nullopt when the
// frame has no pixels.
class FrameImageSource {
 public:
  virtual ~FrameImageSource() = default;
  virtual std::optional<std::string> jpeg_base64(const ClipFrame& frame) const = 0;
};

struct ChatRequest {
  nlohmann::json body;
  std::map<std::string, std::string> headers;

  std::string serialized() const { return body.dump(); }
};

std::string system_prompt();

// Frames without pixels are described in text (trace mode) unless
// cfg.require_pixels, in which case MissingPixels is thrown.
ChatRequest build_prompt(const ClipSpec& clip, const GatewayConfig& cfg, const FrameImageSource* images = nullptr);

// Full-frame variant used by the offline clip evaluation.
ChatRequest build_frames_prompt(const std::vector<std::string>& jpeg_base64_frames, const GatewayConfig& cfg);

struct HttpReply {
  int status = 0;
  std::string body;
};

struct TransportFailure {
  enum class Kind { kTimeout, kConnection };
  Kind kind = Kind::kConnection;
  std::string message;
};

using TransportResult = std::variant<HttpReply, TransportFailure>;

class VlmTransport {
 public:
  virtual ~VlmTransport() = default;
  virtual TransportResult post(std::string_view path, const std::string& body,
                               const std::map<std::string, std::string>& headers) = 0;
};

// cpp-httplib backed client for real or mock endpoints.
std::unique_ptr<VlmTransport> make_http_transport(const GatewayConfig& cfg);

struct DispatchError {
  enum class Kind { kTimeout, kHttpStatus, kMalformedResponse, kVerdictParse, kConnection, kMissingPixels };
  Kind kind = Kind::kConnection;
  int http_status = 0;
  std::string message;

  bool retryable() const { return kind != Kind::kMissingPixels; }
};

std::string to_string(DispatchError::Kind k);

using DispatchResult = std::variant<Verdict, DispatchError>;

// Sends one request and interprets the response. No rate limiting.
DispatchResult call_vlm(VlmTransport& transport, const ChatRequest& request);

// Reads choices[0].message.content from an OpenAI-shaped response body.
std::optional<std::string> extract_message_content(std::string_view body);

// ---------------------------------------------------------------------------
// Retry queue

struct RetryEntry {
  VlmCandidate candidate;
  std::uint64_t enqueued_ms = 0;
  // Failed HTTP attempts, the first dispatch included.
  int attempts_used = 0;
};

struct Expired {};
struct Exhausted {
  DispatchError last_error;
};
struct Dropped {};

using RetryOutcomeKind = std::variant<Verdict, Expired, Exhausted, Dropped>;

struct RetryOutcome {
  VlmCandidate candidate;
  RetryOutcomeKind outcome;
  int attempts_used = 0;
};

struct RateLimited {};
using AttemptResult = std::variant<Verdict, DispatchError, RateLimited>;

// Bounded FIFO. Not synchronized; the gateway serializes access.
class RetryQueue {
 public:
  RetryQueue(std::size_t capacity, int retry_max, std::uint64_t window_ms);

  // attempts_used carries failures already spent (1 when the first dispatch
  // failed, 0 when it was rate-limited). On overflow the oldest entry is
  // displaced and returned.
  std::optional<RetryEntry> enqueue(VlmCandidate candidate, std::uint64_t now_ms, int attempts_used = 0);

  // Expires entries older than the window, then walks the rest in FIFO order
  // calling attempt() for each. Rate-limited attempts stay queued without
  // consuming budget and end the walk.
  std::vector<RetryOutcome> tick(std::uint64_t now_ms, const std::function<AttemptResult(VlmCandidate&)>& attempt);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::deque<RetryEntry>& entries() const { return entries_; }
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  int retry_max_;
  std::uint64_t window_ms_;
  std::deque<RetryEntry> entries_;
};

struct GatewayStats {
  std::uint64_t submitted = 0;
  std::uint64_t vlm_calls = 0;
  std::uint64_t skips = 0;
  std::uint64_t retries = 0;
  std::uint64_t expired = 0;
  std::uint64_t exhausted = 0;
  std::uint64_t dropped = 0;
  std::uint64_t errors = 0;
  std::uint64_t max_queue_len = 0;
  std::map<std::string, std::uint64_t> errors_by_kind;
};

// Outcome of the first dispatch of a candidate: a terminal verdict or a
// hand-off to the retry queue.
struct Queued {
  Verdict verdict;  // SKIPPED when rate-limited
  std::optional<DispatchError> error;
};
using SubmitResult = std::variant<Verdict, Queued, Exhausted>;

// Thread-safe. submit() calls the endpoint outside the queue lock; tick() holds
// it for the whole walk (single consumer).
class VlmGateway {
 public:
  VlmGateway(GatewayConfig cfg, std::shared_ptr<VlmTransport> transport,
             std::shared_ptr<const FrameImageSource> images = nullptr);

  // First dispatch. Queued results already sit in the retry queue; a
  // displaced entry is reported by the next tick() as Dropped.
  SubmitResult submit(VlmCandidate candidate, std::uint64_t now_ms);

  // Single-consumer retry worker step.
  std::vector<RetryOutcome> tick(std::uint64_t now_ms);

  // Rate-limited dispatch of one candidate; SKIPPED when no permit.
  AttemptResult attempt(VlmCandidate& candidate, std::uint64_t now_ms);

  GatewayStats stats() const;
  std::size_t queue_size() const;
  const GatewayConfig& config() const { return cfg_; }
  RateLimiter& limiter() { return limiter_; }

 private:
  void count_error(const DispatchError& e);

  GatewayConfig cfg_;
  std::shared_ptr<VlmTransport> transport_;
  std::shared_ptr<const FrameImageSource> images_;
  RateLimiter limiter_;

  // Lock order: mu_ before stats_mu_.
  mutable std::mutex mu_;
  RetryQueue queue_;
  mutable std::mutex stats_mu_;
  std::vector<RetryOutcome> pending_drops_;
  GatewayStats stats_;
};

}  // namespace paza
