#include "paza/pipeline.hpp"

#include <cmath>
#include <stdexcept>

namespace paza {

void PipelineConfig::validate() const {
  prefilter.validate();
  gateway.validate();
  if (!(track_retention_s > 0.0)) throw std::invalid_argument("track_retention_s must be > 0");
  if (!(alert_retention_h >= 0.0)) throw std::invalid_argument("alert_retention_h must be >= 0");
  if (nominal_fps < 1) throw std::invalid_argument("nominal_fps must be >= 1");
  if (gateway.rate_limit_per_min != prefilter.rate_limit_per_min) {
    throw std::invalid_argument("gateway and pre-filter rate limits disagree");
  }
}

RegistryConfig PipelineConfig::registry() const {
  RegistryConfig r;
  r.retention_ms = static_cast<std::uint64_t>(std::llround(track_retention_s * 1000.0));
  r.buffer_horizon_ms = static_cast<std::uint64_t>(std::llround(prefilter.buffer_horizon_s * 1000.0));
  r.buffer_hard_cap = buffer_hard_cap(prefilter.buffer_horizon_s, nominal_fps);
  return r;
}

std::string to_string(CandidateFate f) {
  switch (f) {
    case CandidateFate::kVerdict:
      return "verdict";
    case CandidateFate::kExpired:
      return "expired";
    case CandidateFate::kExhausted:
      return "exhausted";
    case CandidateFate::kDropped:
      return "dropped";
  }
  return "verdict";
}

nlohmann::json to_json(const CandidateOutcome& o) {
  nlohmann::json j = {{"candidate_id", o.candidate_id},
                      {"camera_id", o.key.camera_id},
                      {"track_id", o.key.track_id},
                      {"created_ms", o.created_ms},
                      {"resolved_ms", o.resolved_ms},
                      {"fate", to_string(o.fate)},
                      {"attempts", o.attempts}};
  j["category"] = o.category ? nlohmann::json(to_string(*o.category)) : nlohmann::json(nullptr);
  j["alert_id"] = o.alert_id ? nlohmann::json(*o.alert_id) : nlohmann::json(nullptr);
  j["error"] = o.error ? nlohmann::json(*o.error) : nlohmann::json(nullptr);
  return j;
}

Pipeline::Pipeline(PipelineConfig cfg, std::shared_ptr<VlmTransport> transport, std::shared_ptr<AlertStore> store,
                   std::shared_ptr<const FileImageSource> images)
    : cfg_((cfg.validate(), std::move(cfg))),
      store_(std::move(store)),
      images_(std::move(images)),
      gateway_(cfg_.gateway, std::move(transport), images_),
      registry_(cfg_.registry()) {
  if (cfg_.async_dispatch) {
    for (int i = 0; i < cfg_.gateway.max_in_flight; ++i) workers_.emplace_back([this] { worker_loop(); });
  }
}

Pipeline::~Pipeline() {
  {
    std::lock_guard lock(pool_mu_);
    stopping_ = true;
  }
  pool_cv_.notify_all();
  for (auto& t : workers_) t.join();
}

void Pipeline::set_tagger(Tagger tagger) {
  std::lock_guard lock(mu_);
  tagger_ = std::move(tagger);
}

std::vector<std::uint64_t> Pipeline::advance_locked(std::uint64_t now_ms) {
  std::vector<std::uint64_t> ticks;
  if (!clock_ms_) {
    clock_ms_ = now_ms;
    first_event_ms_ = now_ms;
    return ticks;
  }
  if (now_ms <= *clock_ms_) return ticks;
  // Past the retry window every entry has expired, so later boundaries are
  // no-ops and are skipped.
  const std::uint64_t max_ticks = cfg_.gateway.retry_window_ms() / kRetryTickMs + 2;
  for (std::uint64_t b = (*clock_ms_ / kRetryTickMs + 1) * kRetryTickMs; b <= now_ms && ticks.size() < max_ticks;
       b += kRetryTickMs) {
    ticks.push_back(b);
  }
  clock_ms_ = now_ms;
  return ticks;
}

void Pipeline::run_ticks(const std::vector<std::uint64_t>& ticks) {
  for (std::uint64_t at : ticks) {
    if (gateway_.queue_size() == 0) break;
    handle_tick(at, gateway_.tick(at));
  }
}

void Pipeline::ingest(const FrameEvent& event) {
  std::vector<std::uint64_t> ticks;
  std::vector<VlmCandidate> candidates;
  {
    std::lock_guard lock(mu_);
    std::vector<PersonObservation> observations;
    try {
      observations = registry_.ingest(event);
    } catch (const StaleEvent&) {
      ++stats_.stale_events;
      return;
    }
    ticks = advance_locked(event.timestamp_ms);
    ++stats_.frames_processed;
    stats_.person_observations += observations.size();

    for (const PersonObservation& obs : observations) {
      TrackState& track = *obs.track;
      TriggerDecision d = decide_trigger(track, assess_signals(obs, cfg_.prefilter), cfg_.prefilter, event.timestamp_ms);
      if (auto* hold = std::get_if<Hold>(&d)) {
        ++stats_.holds_by_reason[to_string(hold->reason)];
        continue;
      }
      ++stats_.triggers_fired;
      fires_.push_back(FireRecord{track.key, event.timestamp_ms});
      VlmCandidate c;
      c.id = next_candidate_id_++;
      c.key = track.key;
      c.created_ms = event.timestamp_ms;
      c.signal_report = std::get<Fire>(std::move(d)).report;
      c.clip = sample_clip(track.key, track.buffer, static_cast<std::size_t>(cfg_.prefilter.clip_frames_k),
                           cfg_.geometry);
      if (tagger_) c.test_tag = tagger_(track.key);
      ++unresolved_;
      candidates.push_back(std::move(c));
    }
    registry_.gc_expired(event.camera_id, event.timestamp_ms);
    stats_.persons_tracked = registry_.tracks_created();
  }
  run_ticks(ticks);
  for (VlmCandidate& c : candidates) dispatch(std::move(c));
}

bool Pipeline::ingest_line(std::string_view line) {
  FrameEvent ev;
  try {
    ev = parse_frame_event(line);
  } catch (const ParseError&) {
    std::lock_guard lock(mu_);
    ++stats_.parse_errors;
    return false;
  }
  ingest(ev);
  return true;
}

void Pipeline::advance(std::uint64_t now_ms) {
  std::vector<std::uint64_t> ticks;
  {
    std::lock_guard lock(mu_);
    ticks = advance_locked(now_ms);
  }
  run_ticks(ticks);
}

std::uint64_t Pipeline::drain() {
  wait_idle();
  // Every entry expires within the retry window, which bounds the loop.
  const std::uint64_t limit = cfg_.gateway.retry_window_ms() / kRetryTickMs + 4;
  for (std::uint64_t i = 0; i < limit && gateway_.queue_size() > 0; ++i) {
    const std::uint64_t now = clock_ms().value_or(0);
    advance((now / kRetryTickMs + 1) * kRetryTickMs);
    wait_idle();
  }
  // Drops displaced by the last enqueue are reported on the next tick.
  if (pending() > 0) {
    const std::uint64_t now = clock_ms().value_or(0);
    const std::uint64_t at = (now / kRetryTickMs + 1) * kRetryTickMs;
    handle_tick(at, gateway_.tick(at));
    std::lock_guard lock(mu_);
    clock_ms_ = at;
  }
  return clock_ms().value_or(0);
}

void Pipeline::dispatch(VlmCandidate candidate) {
  if (!cfg_.async_dispatch) {
    const VlmCandidate copy = candidate;
    handle_submit(copy, gateway_.submit(std::move(candidate), copy.created_ms));
    return;
  }
  {
    std::lock_guard lock(pool_mu_);
    jobs_.push_back(std::move(candidate));
  }
  pool_cv_.notify_one();
}

void Pipeline::worker_loop() {
  for (;;) {
    VlmCandidate job;
    {
      std::unique_lock lock(pool_mu_);
      pool_cv_.wait(lock, [this] { return stopping_ || !jobs_.empty(); });
      if (jobs_.empty()) return;
      job = std::move(jobs_.front());
      jobs_.pop_front();
      ++running_;
    }
    const VlmCandidate copy = job;
    handle_submit(copy, gateway_.submit(std::move(job), copy.created_ms));
    {
      std::lock_guard lock(pool_mu_);
      --running_;
    }
    idle_cv_.notify_all();
  }
}

void Pipeline::wait_idle() {
  if (!cfg_.async_dispatch) return;
  std::unique_lock lock(pool_mu_);
  idle_cv_.wait(lock, [this] { return jobs_.empty() && running_ == 0; });
}

void Pipeline::handle_submit(const VlmCandidate& candidate, SubmitResult result) {
  if (auto* v = std::get_if<Verdict>(&result)) {
    std::vector<Image> snaps = v->alerts() ? snapshots_for(candidate) : std::vector<Image>{};
    std::lock_guard lock(mu_);
    resolve_verdict_locked(candidate, *v, candidate.created_ms, candidate.attempts + 1, std::move(snaps));
    return;
  }
  if (auto* ex = std::get_if<Exhausted>(&result)) {
    std::lock_guard lock(mu_);
    resolve_failure_locked(candidate, CandidateFate::kExhausted, candidate.created_ms, candidate.attempts,
                           to_string(ex->last_error.kind));
  }
  // Queued: resolved later by a tick.
}

void Pipeline::handle_tick(std::uint64_t at_ms, std::vector<RetryOutcome> outcomes) {
  // Image IO stays outside the pipeline lock.
  std::vector<std::vector<Image>> snaps(outcomes.size());
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto* v = std::get_if<Verdict>(&outcomes[i].outcome);
    if (v && v->alerts()) snaps[i] = snapshots_for(outcomes[i].candidate);
  }
  std::lock_guard lock(mu_);
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    RetryOutcome& o = outcomes[i];
    std::visit(
        [&](auto& kind) {
          using T = std::decay_t<decltype(kind)>;
          if constexpr (std::is_same_v<T, Verdict>) {
            resolve_verdict_locked(o.candidate, kind, at_ms, o.candidate.attempts, std::move(snaps[i]));
          } else if constexpr (std::is_same_v<T, Expired>) {
            resolve_failure_locked(o.candidate, CandidateFate::kExpired, at_ms, o.candidate.attempts, std::nullopt);
          } else if constexpr (std::is_same_v<T, Exhausted>) {
            resolve_failure_locked(o.candidate, CandidateFate::kExhausted, at_ms, o.candidate.attempts,
                                   to_string(kind.last_error.kind));
          } else {
            resolve_failure_locked(o.candidate, CandidateFate::kDropped, at_ms, o.candidate.attempts, std::nullopt);
          }
        },
        o.outcome);
  }
}

std::vector<Image> Pipeline::snapshots_for(const VlmCandidate& candidate) const {
  std::vector<Image> out;
  if (!images_) return out;
  for (const ClipFrame& f : candidate.clip.frames) {
    if (!f.image_ref) continue;
    std::optional<Image> full = load_image(images_->resolve(*f.image_ref));
    if (!full) continue;
    if (f.keypoints) full = obfuscate_faces(std::move(*full), *f.keypoints, cfg_.prefilter.keypoint_conf_gate);
    out.push_back(crop_image(*full, f.crop_rect));
  }
  return out;
}

void Pipeline::resolve_verdict_locked(const VlmCandidate& candidate, const Verdict& verdict, std::uint64_t now_ms,
                                      int attempts, std::vector<Image> snapshots) {
  CandidateOutcome o;
  o.candidate_id = candidate.id;
  o.key = candidate.key;
  o.created_ms = candidate.created_ms;
  o.resolved_ms = now_ms;
  o.fate = CandidateFate::kVerdict;
  o.category = verdict.category;
  o.attempts = attempts;
  ++stats_.verdicts_by_category[to_string(verdict.category)];
  if (verdict.alerts()) {
    ++stats_.alerts_by_category[to_string(verdict.category)];
    if (store_) {
      if (auto rec = store_->record_alert(verdict, candidate, now_ms, snapshots)) o.alert_id = rec->alert_id;
    }
  }
  outcomes_.push_back(std::move(o));
  if (unresolved_ > 0) --unresolved_;
}

void Pipeline::resolve_failure_locked(const VlmCandidate& candidate, CandidateFate fate, std::uint64_t now_ms,
                                      int attempts, std::optional<std::string> error) {
  CandidateOutcome o;
  o.candidate_id = candidate.id;
  o.key = candidate.key;
  o.created_ms = candidate.created_ms;
  o.resolved_ms = now_ms;
  o.fate = fate;
  o.attempts = attempts;
  o.error = std::move(error);
  outcomes_.push_back(std::move(o));
  if (unresolved_ > 0) --unresolved_;
}

RunStats Pipeline::stats() const {
  RunStats s;
  {
    std::lock_guard lock(mu_);
    s = stats_;
  }
  const GatewayStats g = gateway_.stats();
  s.vlm_calls = g.vlm_calls;
  s.skips = g.skips;
  s.retries = g.retries;
  s.expired = g.expired;
  s.exhausted = g.exhausted;
  s.dropped = g.dropped;
  s.errors = g.errors;
  return s;
}

std::vector<FireRecord> Pipeline::fires() const {
  std::lock_guard lock(mu_);
  return fires_;
}

std::vector<CandidateOutcome> Pipeline::outcomes() const {
  std::lock_guard lock(mu_);
  return outcomes_;
}

std::optional<std::uint64_t> Pipeline::clock_ms() const {
  std::lock_guard lock(mu_);
  return clock_ms_;
}

std::optional<std::uint64_t> Pipeline::first_event_ms() const {
  std::lock_guard lock(mu_);
  return first_event_ms_;
}

std::size_t Pipeline::pending() const {
  std::lock_guard lock(mu_);
  return unresolved_;
}

}  // namespace paza
