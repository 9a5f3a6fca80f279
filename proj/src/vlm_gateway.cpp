#include "paza/vlm_gateway.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <regex>

namespace paza {
namespace {

using nlohmann::json;

constexpr std::array<std::pair<VerdictCategory, std::string_view>, 3> kCategoryWords = {{
    {VerdictCategory::kConfirmed, "confirmed"},
    {VerdictCategory::kUncertain, "uncertain"},
    {VerdictCategory::kNormal, "normal"},
}};

// Lower value wins.
int precedence(VerdictCategory c) {
  switch (c) {
    case VerdictCategory::kConfirmed:
      return 0;
    case VerdictCategory::kUncertain:
      return 1;
    case VerdictCategory::kNormal:
      return 2;
    case VerdictCategory::kSkipped:
      return 3;
  }
  return 3;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string line(text.substr(start, nl - start));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
    start = nl + 1;
  }
  return lines;
}

// Whole-word category keyword at position pos of a lower-cased string.
std::optional<std::pair<VerdictCategory, std::size_t>> word_at(const std::string& low, std::size_t pos) {
  for (const auto& [cat, word] : kCategoryWords) {
    if (low.compare(pos, word.size(), word) != 0) continue;
    const std::size_t end = pos + word.size();
    if (pos > 0 && is_word_char(low[pos - 1])) continue;
    if (end < low.size() && is_word_char(low[end])) continue;
    return std::make_pair(cat, word.size());
  }
  return std::nullopt;
}

struct Span {
  std::size_t begin;
  std::size_t end;
};

// Line-leading token (after markdown decoration) or "verdict:" prefix.
std::optional<std::pair<VerdictCategory, Span>> structured_token(const std::string& line) {
  const std::string low = lower(line);
  auto skip_decoration = [&](std::size_t p) {
    while (p < low.size() && (std::isspace(static_cast<unsigned char>(low[p])) || low[p] == '*' || low[p] == '#' ||
                              low[p] == '-' || low[p] == '>' || low[p] == '[' || low[p] == '`'))
      ++p;
    return p;
  };
  std::size_t p = skip_decoration(0);
  if (auto w = word_at(low, p)) return std::make_pair(w->first, Span{0, p + w->second});

  for (std::size_t v = low.find("verdict"); v != std::string::npos; v = low.find("verdict", v + 1)) {
    std::size_t q = v + 7;
    while (q < low.size() && (low[q] == ' ' || low[q] == '*' || low[q] == '\t')) ++q;
    if (q >= low.size() || (low[q] != ':' && low[q] != '=' && low[q] != '-')) continue;
    q = skip_decoration(q + 1);
    if (auto w = word_at(low, q)) return std::make_pair(w->first, Span{v, q + w->second});
  }
  return std::nullopt;
}

const std::regex& confidence_regex() {
  static const std::regex re(R"(confidence(?:\s+score)?\s*\**\s*[:=]?\s*\**\s*\(?\s*(-?\d{1,9}))",
                             std::regex::icase | std::regex::ECMAScript);
  return re;
}

std::optional<std::pair<int, Span>> find_confidence(const std::string& line) {
  std::smatch m;
  if (!std::regex_search(line, m, confidence_regex())) return std::nullopt;
  const long long raw = std::stoll(m[1].str());
  const int value = static_cast<int>(std::clamp<long long>(raw, 0, 100));
  std::size_t end = static_cast<std::size_t>(m.position(0) + m.length(0));
  // Swallow a trailing percent sign and closing decoration.
  while (end < line.size() && (line[end] == '%' || line[end] == ')' || line[end] == '*')) ++end;
  return std::make_pair(value, Span{static_cast<std::size_t>(m.position(0)), end});
}

std::string strip_label(std::string s) {
  static const std::array<std::string_view, 4> labels = {"description", "reasoning", "explanation", "observation"};
  std::string t = trim(s);
  std::size_t p = 0;
  while (p < t.size() && (t[p] == '*' || t[p] == '-' || t[p] == '#')) ++p;
  const std::string low = lower(t.substr(p));
  for (std::string_view l : labels) {
    if (low.rfind(l, 0) == 0) {
      std::size_t q = p + l.size();
      while (q < t.size() && (t[q] == '*' || t[q] == ' ')) ++q;
      if (q < t.size() && t[q] == ':') return trim(t.substr(q + 1));
    }
  }
  // Leftover separators from a removed token, e.g. "CONFIRMED - text".
  std::size_t q = 0;
  while (q < t.size() && (t[q] == ':' || t[q] == '-' || t[q] == '*' || t[q] == ',' || t[q] == '.' || t[q] == ']' ||
                          std::isspace(static_cast<unsigned char>(t[q]))))
    ++q;
  return trim(t.substr(q));
}

std::string format_box(const BBox& b) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "[%.1f, %.1f, %.1f, %.1f]", b.x1, b.y1, b.x2, b.y2);
  return buf;
}

json user_text(const std::string& text) { return json{{"type", "text"}, {"text", text}}; }

json user_image(const std::string& b64) {
  return json{{"type", "image_url"}, {"image_url", {{"url", "data:image/jpeg;base64," + b64}}}};
}

ChatRequest make_request(json user_content, const GatewayConfig& cfg) {
  ChatRequest req;
  req.body = json{{"model", cfg.model_name},
                  {"temperature", cfg.temperature},
                  {"max_tokens", cfg.max_tokens},
                  {"messages", json::array({json{{"role", "system"}, {"content", system_prompt()}},
                                            json{{"role", "user"}, {"content", std::move(user_content)}}})}};
  req.headers["Content-Type"] = "application/json";
  if (cfg.api_key && !cfg.api_key->empty()) req.headers["Authorization"] = "Bearer " + *cfg.api_key;
  return req;
}

std::uint64_t seconds_to_ms(double s) { return static_cast<std::uint64_t>(std::llround(s * 1000.0)); }

}  // namespace

void GatewayConfig::validate() const {
  if (rate_limit_per_min < 1) throw std::invalid_argument("rate_limit_per_min must be >= 1");
  if (queue_cap < 1) throw std::invalid_argument("queue_cap must be >= 1");
  if (retry_max < 0) throw std::invalid_argument("retry_max must be >= 0");
  if (!(retry_window_s >= 0.0)) throw std::invalid_argument("retry_window_s must be >= 0");
  if (!(request_timeout_s > 0.0)) throw std::invalid_argument("request_timeout_s must be > 0");
  if (max_in_flight < 1) throw std::invalid_argument("max_in_flight must be >= 1");
  if (api_url.empty()) throw std::invalid_argument("api_url is empty");
}

std::uint64_t GatewayConfig::retry_window_ms() const { return seconds_to_ms(retry_window_s); }

std::string to_string(VerdictCategory c) {
  switch (c) {
    case VerdictCategory::kConfirmed:
      return "CONFIRMED";
    case VerdictCategory::kUncertain:
      return "UNCERTAIN";
    case VerdictCategory::kNormal:
      return "NORMAL";
    case VerdictCategory::kSkipped:
      return "SKIPPED";
  }
  return "NORMAL";
}

std::optional<VerdictCategory> category_from_string(std::string_view s) {
  const std::string l = lower(s);
  if (l == "confirmed") return VerdictCategory::kConfirmed;
  if (l == "uncertain") return VerdictCategory::kUncertain;
  if (l == "normal") return VerdictCategory::kNormal;
  if (l == "skipped") return VerdictCategory::kSkipped;
  return std::nullopt;
}

int band_midpoint(VerdictCategory c) {
  switch (c) {
    case VerdictCategory::kConfirmed:
      return 85;
    case VerdictCategory::kUncertain:
      return 50;
    case VerdictCategory::kNormal:
      return 15;
    case VerdictCategory::kSkipped:
      return 0;
  }
  return 0;
}

Verdict parse_verdict(std::string_view text) {
  Verdict v;
  v.raw = std::string(text);
  std::vector<std::string> lines = split_lines(text);

  std::optional<VerdictCategory> structured;
  std::optional<int> confidence;
  std::vector<std::string> leftover;
  leftover.reserve(lines.size());

  for (std::string& line : lines) {
    std::string rest = line;
    if (auto tok = structured_token(rest)) {
      if (!structured || precedence(tok->first) < precedence(*structured)) structured = tok->first;
      rest.erase(tok->second.begin, tok->second.end - tok->second.begin);
    }
    if (auto conf = find_confidence(rest)) {
      if (!confidence) confidence = conf->first;
      rest.erase(conf->second.begin, conf->second.end - conf->second.begin);
    }
    leftover.push_back(std::move(rest));
  }

  if (structured) {
    v.category = *structured;
    v.confidence = confidence.value_or(band_midpoint(*structured));
    std::string desc;
    for (const std::string& l : leftover) {
      std::string s = strip_label(l);
      if (s.empty()) continue;
      if (!desc.empty()) desc += '\n';
      desc += s;
    }
    v.description = std::move(desc);
    return v;
  }

  // Keyword fallback: any whole-word occurrence, resolved by precedence.
  const std::string low = lower(text);
  std::optional<VerdictCategory> best;
  for (std::size_t i = 0; i < low.size(); ++i) {
    if (auto w = word_at(low, i)) {
      if (!best || precedence(w->first) < precedence(*best)) best = w->first;
    }
  }
  if (!best) throw VerdictParseError("no verdict category keyword in response");
  v.category = *best;
  v.confidence = confidence.value_or(band_midpoint(*best));
  v.description = trim(text);
  return v;
}

// ---------------------------------------------------------------------------

RateLimiter::RateLimiter(int limit_per_window, std::uint64_t window_ms)
    : limit_(std::max(1, limit_per_window)), window_ms_(window_ms) {}

void RateLimiter::prune(std::uint64_t now_ms) const {
  // Keep permits in (now - window, now].
  while (!dispatch_times_.empty() && dispatch_times_.front() + window_ms_ <= now_ms) dispatch_times_.pop_front();
}

bool RateLimiter::try_acquire(std::uint64_t now_ms) {
  std::lock_guard lock(mu_);
  prune(now_ms);
  const auto upto = std::upper_bound(dispatch_times_.begin(), dispatch_times_.end(), now_ms);
  if (std::distance(dispatch_times_.begin(), upto) >= limit_) return false;
  dispatch_times_.insert(upto, now_ms);
  return true;
}

std::size_t RateLimiter::in_window(std::uint64_t now_ms) const {
  std::lock_guard lock(mu_);
  prune(now_ms);
  return static_cast<std::size_t>(
      std::distance(dispatch_times_.begin(), std::upper_bound(dispatch_times_.begin(), dispatch_times_.end(), now_ms)));
}

// ---------------------------------------------------------------------------

std::string system_prompt() {
  return "You are a retail loss-prevention analyst reviewing a short sequence of cropped images of one shopper.\n"
         "The frames are in chronological order and labeled [Frame i/N]. Compare them in sequence: an item that is "
         "visible in an earlier frame and gone in a later one, while the shopper's hands moved toward their body, is "
         "evidence that the item was concealed.\n"
         "Look only for these observable actions:\n"
         "1. placing an item into a pocket or bag\n"
         "2. tucking an item under clothing\n"
         "3. hiding an item behind the body\n"
         "4. palming a small item\n"
         "5. moving an item from a shelf toward the body\n"
         "Base your judgment on hand-object interactions and body posture, never on who the person is.\n"
         "Reply in exactly this format:\n"
         "VERDICT: CONFIRMED, UNCERTAIN or NORMAL\n"
         "CONFIDENCE: an integer from 0 to 100\n"
         "DESCRIPTION: one or two sentences describing what the shopper did\n"
         "Use CONFIRMED for clear evidence of concealment (confidence 70-100), UNCERTAIN for suspicious but "
         "ambiguous behavior (confidence 30-70), and NORMAL when no concealment is visible (confidence 0-30).";
}

ChatRequest build_prompt(const ClipSpec& clip, const GatewayConfig& cfg, const FrameImageSource* images) {
  if (clip.frames.empty()) throw std::invalid_argument("clip has no frames");
  const std::size_t total = clip.label_total ? clip.label_total : clip.frames.size();

  json content = json::array();
  for (std::size_t i = 0; i < clip.frames.size(); ++i) {
    const ClipFrame& f = clip.frames[i];
    content.push_back(user_text("[Frame " + std::to_string(i + 1) + "/" + std::to_string(total) + "]"));
    std::optional<std::string> b64;
    if (f.image_ref && images) b64 = images->jpeg_base64(f);
    if (b64) {
      content.push_back(user_image(*b64));
    } else if (cfg.require_pixels) {
      throw MissingPixels("frame " + std::to_string(i + 1) + " of " + clip.key.to_string() + " has no image");
    } else {
      content.push_back(user_text("t=" + std::to_string(f.timestamp_ms) + "ms person=" + format_box(f.person_bbox) +
                                  " crop=" + format_box(f.crop_rect)));
    }
  }
  return make_request(std::move(content), cfg);
}

ChatRequest build_frames_prompt(const std::vector<std::string>& jpeg_base64_frames, const GatewayConfig& cfg) {
  if (jpeg_base64_frames.empty()) throw std::invalid_argument("no frames");
  const std::string total = std::to_string(jpeg_base64_frames.size());
  json content = json::array();
  for (std::size_t i = 0; i < jpeg_base64_frames.size(); ++i) {
    content.push_back(user_text("[Frame " + std::to_string(i + 1) + "/" + total + "]"));
    content.push_back(user_image(jpeg_base64_frames[i]));
  }
  return make_request(std::move(content), cfg);
}

std::string to_string(DispatchError::Kind k) {
  switch (k) {
    case DispatchError::Kind::kTimeout:
      return "timeout";
    case DispatchError::Kind::kHttpStatus:
      return "http_status";
    case DispatchError::Kind::kMalformedResponse:
      return "malformed_response";
    case DispatchError::Kind::kVerdictParse:
      return "verdict_parse";
    case DispatchError::Kind::kConnection:
      return "connection";
    case DispatchError::Kind::kMissingPixels:
      return "missing_pixels";
  }
  return "unknown";
}

std::optional<std::string> extract_message_content(std::string_view body) {
  json doc = json::parse(body.begin(), body.end(), nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) return std::nullopt;
  auto choices = doc.find("choices");
  if (choices == doc.end() || !choices->is_array() || choices->empty()) return std::nullopt;
  const json& first = (*choices)[0];
  if (!first.is_object()) return std::nullopt;
  auto msg = first.find("message");
  if (msg == first.end() || !msg->is_object()) return std::nullopt;
  auto content = msg->find("content");
  if (content == msg->end()) return std::nullopt;
  if (content->is_string()) return content->get<std::string>();
  // Some servers return content parts.
  if (content->is_array()) {
    std::string joined;
    for (const json& part : *content) {
      if (part.is_object() && part.value("type", "") == "text" && part.contains("text") && part["text"].is_string())
        joined += part["text"].get<std::string>();
    }
    if (!joined.empty()) return joined;
  }
  return std::nullopt;
}

DispatchResult call_vlm(VlmTransport& transport, const ChatRequest& request) {
  const auto start = std::chrono::steady_clock::now();
  TransportResult res = transport.post(kChatCompletionsPath, request.serialized(), request.headers);
  const auto latency = static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count());

  if (const auto* fail = std::get_if<TransportFailure>(&res)) {
    return DispatchError{fail->kind == TransportFailure::Kind::kTimeout ? DispatchError::Kind::kTimeout
                                                                        : DispatchError::Kind::kConnection,
                         0, fail->message};
  }
  const HttpReply& reply = std::get<HttpReply>(res);
  if (reply.status != 200) {
    return DispatchError{DispatchError::Kind::kHttpStatus, reply.status, "HTTP " + std::to_string(reply.status)};
  }
  const auto content = extract_message_content(reply.body);
  if (!content) return DispatchError{DispatchError::Kind::kMalformedResponse, 200, "no choices[0].message.content"};
  try {
    Verdict v = parse_verdict(*content);
    v.latency_ms = latency;
    return v;
  } catch (const VerdictParseError& e) {
    return DispatchError{DispatchError::Kind::kVerdictParse, 200, e.what()};
  }
}

// ---------------------------------------------------------------------------

RetryQueue::RetryQueue(std::size_t capacity, int retry_max, std::uint64_t window_ms)
    : capacity_(std::max<std::size_t>(capacity, 1)), retry_max_(retry_max), window_ms_(window_ms) {}

std::optional<RetryEntry> RetryQueue::enqueue(VlmCandidate candidate, std::uint64_t now_ms, int attempts_used) {
  std::optional<RetryEntry> displaced;
  if (entries_.size() >= capacity_) {
    displaced = std::move(entries_.front());
    entries_.pop_front();
  }
  entries_.push_back(RetryEntry{std::move(candidate), now_ms, attempts_used});
  return displaced;
}

std::vector<RetryOutcome> RetryQueue::tick(std::uint64_t now_ms,
                                           const std::function<AttemptResult(VlmCandidate&)>& attempt) {
  std::vector<RetryOutcome> out;
  std::deque<RetryEntry> keep;
  bool budget_exhausted = false;
  while (!entries_.empty()) {
    RetryEntry e = std::move(entries_.front());
    entries_.pop_front();
    if (now_ms > e.enqueued_ms && now_ms - e.enqueued_ms > window_ms_) {
      out.push_back(RetryOutcome{std::move(e.candidate), Expired{}, e.attempts_used});
      continue;
    }
    if (budget_exhausted) {
      keep.push_back(std::move(e));
      continue;
    }
    AttemptResult r = attempt(e.candidate);
    if (std::holds_alternative<RateLimited>(r)) {
      budget_exhausted = true;
      keep.push_back(std::move(e));
    } else if (auto* v = std::get_if<Verdict>(&r)) {
      out.push_back(RetryOutcome{std::move(e.candidate), std::move(*v), e.attempts_used});
    } else {
      DispatchError& err = std::get<DispatchError>(r);
      if (!err.retryable() || e.attempts_used >= retry_max_) {
        out.push_back(RetryOutcome{std::move(e.candidate), Exhausted{std::move(err)}, e.attempts_used});
      } else {
        ++e.attempts_used;
        keep.push_back(std::move(e));
      }
    }
  }
  entries_ = std::move(keep);
  return out;
}

// ---------------------------------------------------------------------------

VlmGateway::VlmGateway(GatewayConfig cfg, std::shared_ptr<VlmTransport> transport,
                       std::shared_ptr<const FrameImageSource> images)
    : cfg_(std::move(cfg)),
      transport_(std::move(transport)),
      images_(std::move(images)),
      limiter_(cfg_.rate_limit_per_min),
      queue_(cfg_.queue_cap, cfg_.retry_max, cfg_.retry_window_ms()) {
  cfg_.validate();
}

void VlmGateway::count_error(const DispatchError& e) {
  ++stats_.errors;
  ++stats_.errors_by_kind[to_string(e.kind)];
}

AttemptResult VlmGateway::attempt(VlmCandidate& candidate, std::uint64_t now_ms) {
  ChatRequest req;
  try {
    req = build_prompt(candidate.clip, cfg_, images_.get());
  } catch (const MissingPixels& e) {
    return DispatchError{DispatchError::Kind::kMissingPixels, 0, e.what()};
  }
  if (candidate.test_tag) req.headers[std::string(kTestTagHeader)] = *candidate.test_tag;
  if (!limiter_.try_acquire(now_ms)) {
    std::lock_guard lock(stats_mu_);
    ++stats_.skips;
    return RateLimited{};
  }
  ++candidate.attempts;
  {
    std::lock_guard lock(stats_mu_);
    ++stats_.vlm_calls;
  }
  DispatchResult r = call_vlm(*transport_, req);
  if (auto* v = std::get_if<Verdict>(&r)) return std::move(*v);
  DispatchError err = std::get<DispatchError>(std::move(r));
  std::lock_guard lock(stats_mu_);
  count_error(err);
  return err;
}

SubmitResult VlmGateway::submit(VlmCandidate candidate, std::uint64_t now_ms) {
  {
    std::lock_guard lock(stats_mu_);
    ++stats_.submitted;
  }
  AttemptResult r = attempt(candidate, now_ms);
  if (auto* v = std::get_if<Verdict>(&r)) return std::move(*v);

  Queued queued{Verdict::skipped(), std::nullopt};
  int failures = 0;
  if (auto* err = std::get_if<DispatchError>(&r)) {
    failures = 1;
    if (!err->retryable() || cfg_.retry_max == 0) {
      std::lock_guard lock(stats_mu_);
      ++stats_.exhausted;
      return Exhausted{std::move(*err)};
    }
    queued.error = std::move(*err);
  }

  std::lock_guard lock(mu_);
  auto displaced = queue_.enqueue(std::move(candidate), now_ms, failures);
  std::lock_guard stats_lock(stats_mu_);
  if (displaced) {
    ++stats_.dropped;
    pending_drops_.push_back(RetryOutcome{std::move(displaced->candidate), Dropped{}, displaced->attempts_used});
  }
  stats_.max_queue_len = std::max<std::uint64_t>(stats_.max_queue_len, queue_.size());
  return queued;
}

std::vector<RetryOutcome> VlmGateway::tick(std::uint64_t now_ms) {
  std::lock_guard lock(mu_);
  std::vector<RetryOutcome> out;
  {
    std::lock_guard stats_lock(stats_mu_);
    out = std::move(pending_drops_);
    pending_drops_.clear();
  }
  auto walked = queue_.tick(now_ms, [&](VlmCandidate& c) -> AttemptResult {
    AttemptResult r = attempt(c, now_ms);
    if (!std::holds_alternative<RateLimited>(r)) {
      std::lock_guard stats_lock(stats_mu_);
      ++stats_.retries;
    }
    return r;
  });
  std::lock_guard stats_lock(stats_mu_);
  for (RetryOutcome& o : walked) {
    if (std::holds_alternative<Expired>(o.outcome)) ++stats_.expired;
    if (std::holds_alternative<Exhausted>(o.outcome)) ++stats_.exhausted;
    out.push_back(std::move(o));
  }
  return out;
}

GatewayStats VlmGateway::stats() const {
  std::lock_guard lock(stats_mu_);
  return stats_;
}

std::size_t VlmGateway::queue_size() const {
  std::lock_guard lock(mu_);
  return queue_.size();
}

}  // namespace paza
