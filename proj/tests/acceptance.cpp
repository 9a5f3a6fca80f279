// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 on any
// failure.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "paza/analytics.hpp"
#include "paza/clip_builder.hpp"
#include "paza/pipeline.hpp"
#include "paza/prefilter.hpp"
#include "paza/replay.hpp"
#include "paza/simulator.hpp"
#include "paza/vlm_gateway.hpp"
#include "support.hpp"
#include "verdict_corpus.hpp"

namespace {

using namespace paza;
using Clock = std::chrono::steady_clock;

struct Result {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (ok) return;
    if (pass) detail.clear();
    pass = false;
    if (!detail.empty()) detail += "; ";
    detail += what;
  }
};

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---------------------------------------------------------------------------

Result call_volume_bound() {
  Result r;
  const auto t0 = Clock::now();
  ScenarioConfig sc;
  sc.cameras = 4;
  sc.fps = 10;
  sc.duration_s = 60;
  sc.arrival_rate_per_min = 8;
  sc.browse_fraction = 0.9;
  sc.seed = 1;
  const Trace trace = generate_trace(sc);
  Pipeline p(PipelineConfig{}, std::make_shared<ScriptedTransport>(default_mock_script()));
  p.set_tagger(truth_tagger(trace.truth));
  const RunReport rep = replay_events(p, trace.events, ReplayOptions{});
  std::set<TrackKey> triggering;
  for (const FireRecord& f : p.fires()) triggering.insert(f.key);
  const double secs = seconds_since(t0);

  r.require(trace.events.size() == 2400, "frames " + std::to_string(trace.events.size()) + " != 2400");
  r.require(triggering.size() >= 20, "only " + std::to_string(triggering.size()) + " triggering shoppers");
  r.require(rep.stats.vlm_calls <= 10, "vlm_calls " + std::to_string(rep.stats.vlm_calls) + " > 10");
  r.require(rep.stats.reduction_factor() >= 240.0, "reduction " + fmt("%.1f", rep.stats.reduction_factor()));
  r.require(secs < 10.0, "runtime " + fmt("%.2f s", secs));
  if (r.pass) {
    r.detail = std::to_string(trace.events.size()) + " frames, " + std::to_string(triggering.size()) +
               " triggering shoppers, vlm_calls=" + std::to_string(rep.stats.vlm_calls) +
               ", reduction=" + fmt("%.1fx", rep.stats.reduction_factor()) + ", " + fmt("%.2f s", secs);
  }
  return r;
}

Result confusion_table() {
  Result r;
  const ConfusionMetrics m = confusion_metrics(51, 6, 77, 35);
  const std::pair<const char*, std::pair<Ratio, double>> rows[] = {
      {"precision", {m.precision, 0.895}}, {"recall", {m.recall, 0.593}},     {"specificity", {m.specificity, 0.928}},
      {"accuracy", {m.accuracy, 0.757}},   {"f1", {m.f1, 0.713}},
  };
  std::string detail;
  for (const auto& [name, v] : rows) {
    const auto& [got, want] = v;
    r.require(got && std::abs(*got - want) <= 0.001 + 1e-12,
              std::string(name) + " " + (got ? fmt("%.4f", *got) : "undefined") + " vs " + fmt("%.3f", want));
    if (got) detail += std::string(detail.empty() ? "" : ", ") + name + "=" + fmt("%.4f", *got);
  }
  if (r.pass) r.detail = detail;
  return r;
}

Result cost() {
  Result r;
  CostParams p;
  p.gpu_usd_per_hr = 0.40;
  p.hours_per_day = 12;
  p.days_per_month = 30;
  p.stores_sharing = 10;
  const CostBreakdown c = cost_model(p);
  const CostRanges ranges = sum_cost_ranges({20, 60}, {5, 15}, {5, 10});
  r.require(std::abs(c.vlm_per_store - 14.40) < 0.005, "vlm_per_store " + fmt("%.2f", c.vlm_per_store));
  r.require(std::abs(ranges.total.low - 30) < 1e-9 && std::abs(ranges.total.high - 85) < 1e-9,
            "total " + fmt("%.2f", ranges.total.low) + "-" + fmt("%.2f", ranges.total.high));
  if (r.pass) {
    r.detail = "vlm_per_store=$" + fmt("%.2f", c.vlm_per_store) + ", total=$" + fmt("%.0f", ranges.total.low) + "-" +
               fmt("%.0f", ranges.total.high);
  }
  return r;
}

Result call_volume() {
  Result r;
  const CallVolume v = call_volume_projection(10, 60, 12, 30);
  r.require(v.low == 3600 && v.high == 21600, std::to_string(v.low) + "-" + std::to_string(v.high));
  if (r.pass) r.detail = std::to_string(v.low) + "-" + std::to_string(v.high) + " calls/month";
  return r;
}

Result rate_limiter() {
  Result r;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  RateLimiter limiter(10);
  std::vector<std::uint64_t> granted;
  std::uint64_t t = 0;
  std::size_t mismatches = 0;
  for (int i = 0; i < 10'000; ++i) {
    // Mix bursts, same-instant attempts and long gaps.
    const auto pick = rng() % 10;
    t += pick < 3 ? 0 : pick < 8 ? rng() % 4'000 : rng() % 70'000;
    std::size_t in_window = 0;
    for (auto it = granted.rbegin(); it != granted.rend() && *it + 60'000 > t; ++it) ++in_window;
    const bool expect = in_window < 10;
    const bool got = limiter.try_acquire(t);
    mismatches += got != expect;
    if (got) granted.push_back(t);
  }
  // Every 60 s window, anchored at each grant, holds at most 10 grants.
  std::size_t worst = 0;
  for (std::size_t i = 0; i < granted.size(); ++i) {
    std::size_t n = 0;
    for (std::size_t j = i; j < granted.size() && granted[j] < granted[i] + 60'000; ++j) ++n;
    worst = std::max(worst, n);
  }
  const double secs = seconds_since(t0);
  r.require(mismatches == 0, std::to_string(mismatches) + " decisions differ from the brute-force counter");
  r.require(worst <= 10, "a window holds " + std::to_string(worst) + " permits");
  r.require(secs < 5.0, "runtime " + fmt("%.2f s", secs));
  if (r.pass) {
    r.detail = "10000 attempts, " + std::to_string(granted.size()) + " granted, max per window " +
               std::to_string(worst) + ", " + fmt("%.3f s", secs);
  }
  return r;
}

Result retry_queue() {
  Result r;
  const auto t0 = Clock::now();
  // Rules are tried in order, so later probabilities are conditional on the
  // earlier ones missing: marginals are 30% / 10% / 5%.
  MockScript script;
  script.seed = 31;
  script.rules = {{"*", "", 0, MockFault::kHttp500, 0.30, std::nullopt},
                  {"*", "", 0, MockFault::kTimeout, 0.10 / 0.70, std::nullopt},
                  {"*", "", 0, MockFault::kMalformed, 0.05 / 0.60, std::nullopt},
                  {"*", "VERDICT: NORMAL\nCONFIDENCE: 10", 0, MockFault::kNone, 1.0, std::nullopt}};
  auto transport = std::make_shared<ScriptedTransport>(script);
  GatewayConfig cfg;
  VlmGateway g(cfg, transport);

  std::map<std::uint64_t, int> terminal;
  std::map<std::uint64_t, std::uint64_t> submitted_at;
  std::size_t worst_queue = 0;
  int worst_attempts = 0;
  std::uint64_t worst_residency = 0;
  std::map<std::string, std::size_t> fates;

  auto note = [&](const RetryOutcome& o, std::uint64_t now) {
    ++terminal[o.candidate.id];
    worst_attempts = std::max(worst_attempts, o.attempts_used);
    std::visit(
        [&](const auto& k) {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Verdict>) ++fates["verdict"];
          if constexpr (std::is_same_v<K, Expired>) ++fates["expired"];
          if constexpr (std::is_same_v<K, Exhausted>) ++fates["exhausted"];
          if constexpr (std::is_same_v<K, Dropped>) ++fates["dropped"];
          if constexpr (std::is_same_v<K, Verdict> || std::is_same_v<K, Exhausted>)
            worst_residency = std::max(worst_residency, now - submitted_at[o.candidate.id]);
        },
        o.outcome);
  };

  auto submit = [&](std::uint64_t id, std::uint64_t now) {
    VlmCandidate c;
    c.id = id;
    c.key = {"cam", id};
    c.created_ms = now;
    c.clip.frames.push_back(ClipFrame{});
    c.clip.label_total = 1;
    submitted_at[id] = now;
    const SubmitResult res = g.submit(std::move(c), now);
    if (std::holds_alternative<Verdict>(res)) {
      ++terminal[id];
      ++fates["verdict"];
    } else if (std::holds_alternative<Exhausted>(res)) {
      ++terminal[id];
      ++fates["exhausted"];
    }
  };

  auto tick = [&](std::uint64_t now) {
    for (const RetryOutcome& o : g.tick(now)) note(o, now);
    worst_queue = std::max(worst_queue, g.queue_size());
  };

  // A burst that overflows the queue, then a steady stream at three times
  // the rate limit, all ticked once per second.
  std::uint64_t id = 1, now = 0;
  for (; id <= 150; ++id) submit(id, now);
  tick(now);
  while (id <= 500) {
    now += 1'000;
    if (now % 2'000 == 0) submit(id++, now);
    tick(now);
  }
  for (int i = 0; i < 120; ++i) {
    now += 1'000;
    tick(now);
  }
  worst_queue = std::max<std::size_t>(worst_queue, g.stats().max_queue_len);
  const double secs = seconds_since(t0);

  std::size_t bad = 0;
  for (std::uint64_t i = 1; i <= 500; ++i) bad += terminal[i] != 1;
  r.require(terminal.size() == 500 && bad == 0, std::to_string(bad) + " candidates without exactly one outcome");
  r.require(worst_attempts <= 2, "attempts_used reached " + std::to_string(worst_attempts));
  r.require(worst_queue <= 100, "queue reached " + std::to_string(worst_queue));
  r.require(worst_residency <= 30'000, "resolved after " + std::to_string(worst_residency) + " ms");
  r.require(g.queue_size() == 0, "queue not empty at end");
  r.require(secs < 30.0, "runtime " + fmt("%.2f s", secs));
  const GatewayStats s = g.stats();
  r.require(s.errors > 0 && s.retries > 0, "fault injection produced no retries");
  if (r.pass) {
    r.detail = "500 candidates: verdict=" + std::to_string(fates["verdict"]) +
               " exhausted=" + std::to_string(fates["exhausted"]) + " expired=" + std::to_string(fates["expired"]) +
               " dropped=" + std::to_string(fates["dropped"]) + ", max attempts_used=" + std::to_string(worst_attempts) +
               ", max queue=" + std::to_string(worst_queue) + ", " + fmt("%.2f s", secs);
  }
  return r;
}

// Independent restatement of the trigger rule used to audit the pipeline.
struct OracleTrack {
  std::uint64_t first_seen = 0;
  std::set<std::uint16_t> prev;
  std::optional<std::uint64_t> pickup_until;
  std::optional<std::uint64_t> last_fire;
};

struct OracleFire {
  TrackKey key;
  std::uint64_t t = 0;
  std::uint64_t dwell_ms = 0;
  bool any_signal = false;
  std::optional<std::uint64_t> gap_ms;
};

std::vector<OracleFire> oracle_fires(const std::vector<FrameEvent>& events) {
  std::map<TrackKey, OracleTrack> tracks;
  std::vector<OracleFire> out;
  for (const FrameEvent& e : events) {
    for (const TrackedPerson& p : e.tracks) {
      const TrackKey key{e.camera_id, p.track_id};
      auto [it, fresh] = tracks.try_emplace(key);
      OracleTrack& tr = it->second;
      if (fresh) tr.first_seen = e.timestamp_ms;
      const double w = p.bbox.x2 - p.bbox.x1, h = p.bbox.y2 - p.bbox.y1;
      const double cx = (p.bbox.x1 + p.bbox.x2) / 2, cy = (p.bbox.y1 + p.bbox.y2) / 2;
      const double radius = 0.3 * std::sqrt(w * w + h * h);
      std::set<std::uint16_t> now;
      for (const Detection& d : e.detections) {
        if (d.class_id == 0) continue;
        const double dx = (d.bbox.x1 + d.bbox.x2) / 2 - cx, dy = (d.bbox.y1 + d.bbox.y2) / 2 - cy;
        if (std::sqrt(dx * dx + dy * dy) <= radius) now.insert(d.class_id);
      }
      const bool near = !now.empty();
      bool hand = false;
      if (p.keypoints) {
        const Keypoints& k = *p.keypoints;
        double sx = 0, sy = 0;
        int n = 0;
        for (int i : {5, 6, 11, 12}) {
          if (k[i].conf > 0.2) {
            sx += k[i].x;
            sy += k[i].y;
            ++n;
          }
        }
        if (n >= 2) {
          for (int i : {9, 10}) {
            if (k[i].conf <= 0.2) continue;
            const double dx = k[i].x - sx / n, dy = k[i].y - sy / n;
            hand = hand || std::sqrt(dx * dx + dy * dy) <= 0.3 * h;
          }
        }
      }
      std::set<std::uint16_t> gone;
      std::set_difference(tr.prev.begin(), tr.prev.end(), now.begin(), now.end(), std::inserter(gone, gone.end()));
      if (!gone.empty()) tr.pickup_until = e.timestamp_ms + 10'000;
      tr.prev = now;
      const bool pickup = tr.pickup_until && e.timestamp_ms <= *tr.pickup_until;
      const bool any = near || hand || pickup;
      const std::uint64_t dwell = e.timestamp_ms - tr.first_seen;
      const bool cooled = !tr.last_fire || e.timestamp_ms - *tr.last_fire >= 10'000;
      if (dwell >= 3'000 && any && cooled) {
        OracleFire f{key, e.timestamp_ms, dwell, any, std::nullopt};
        if (tr.last_fire) f.gap_ms = e.timestamp_ms - *tr.last_fire;
        tr.last_fire = e.timestamp_ms;
        out.push_back(f);
      }
    }
  }
  return out;
}

Result trigger_properties() {
  Result r;
  std::size_t shoppers = 0, traces = 0, fires = 0, diverged = 0, short_dwell = 0, no_signal = 0, short_gap = 0;
  std::mt19937_64 rng(7);
  for (std::uint64_t seed = 1; shoppers < 1000; ++seed) {
    ScenarioConfig sc;
    sc.seed = seed;
    sc.cameras = 1 + static_cast<int>(rng() % 4);
    sc.duration_s = 60 + static_cast<double>(rng() % 60);
    sc.arrival_rate_per_min = 2 + static_cast<double>(rng() % 7);
    sc.browse_fraction = 0.2 + 0.8 * static_cast<double>(rng() % 100) / 100.0;
    sc.pickup_fraction = static_cast<double>(rng() % 101) / 100.0;
    sc.conceal_fraction = static_cast<double>(rng() % 101) / 100.0;
    sc.emit_keypoints = rng() % 5 != 0;
    const Trace trace = generate_trace(sc);
    shoppers += trace.truth.shoppers.size();
    ++traces;

    Pipeline p(PipelineConfig{}, std::make_shared<ScriptedTransport>(default_mock_script()));
    replay_events(p, trace.events, ReplayOptions{});
    const auto got = p.fires();
    const auto want = oracle_fires(trace.events);
    fires += got.size();
    bool same = got.size() == want.size();
    for (std::size_t i = 0; same && i < got.size(); ++i) same = got[i].key == want[i].key && got[i].time_ms == want[i].t;
    diverged += !same;

    // Audit the pipeline's own fires against the oracle's per-frame state.
    std::map<std::pair<TrackKey, std::uint64_t>, const OracleFire*> by_time;
    for (const OracleFire& f : want) by_time[{f.key, f.t}] = &f;
    std::map<TrackKey, std::uint64_t> last;
    std::map<TrackKey, std::uint64_t> first_seen;
    for (const FrameEvent& e : trace.events) {
      for (const TrackedPerson& tp : e.tracks) first_seen.emplace(TrackKey{e.camera_id, tp.track_id}, e.timestamp_ms);
    }
    for (const FireRecord& f : got) {
      short_dwell += f.time_ms - first_seen.at(f.key) < 3'000;
      auto it = by_time.find({f.key, f.time_ms});
      no_signal += it == by_time.end() || !it->second->any_signal;
      if (auto l = last.find(f.key); l != last.end()) short_gap += f.time_ms - l->second < 10'000;
      last[f.key] = f.time_ms;
    }
  }

  // Single-concealer scenarios: exactly one shopper, who conceals.
  std::size_t singles = 0, missed = 0;
  for (std::uint64_t seed = 1; singles < 50 && seed < 5'000; ++seed) {
    ScenarioConfig sc;
    sc.seed = seed;
    sc.cameras = 1;
    sc.duration_s = 30;
    sc.arrival_rate_per_min = 1.5;
    sc.browse_fraction = 1.0;
    sc.pickup_fraction = 1.0;
    sc.conceal_fraction = 1.0;
    const Trace trace = generate_trace(sc);
    if (trace.truth.shoppers.size() != 1 || trace.truth.shoppers[0].behavior != ShopperBehavior::kConceal) continue;
    ++singles;
    Pipeline p(PipelineConfig{}, std::make_shared<ScriptedTransport>(default_mock_script()));
    const RunReport rep = replay_events(p, trace.events, ReplayOptions{false, false, trace.truth});
    missed += !(rep.trigger && rep.trigger->trigger_recall && *rep.trigger->trigger_recall == 1.0);
  }

  r.require(short_dwell == 0, std::to_string(short_dwell) + " fires with dwell < 3 s");
  r.require(no_signal == 0, std::to_string(no_signal) + " fires with all signals false");
  r.require(short_gap == 0, std::to_string(short_gap) + " inter-fire gaps < 10 s");
  r.require(diverged == 0, std::to_string(diverged) + " traces where fires differ from the rule oracle");
  r.require(singles == 50, "only " + std::to_string(singles) + " single-concealer scenarios found");
  r.require(missed == 0, std::to_string(missed) + " single-concealer scenarios with recall < 1");
  if (r.pass) {
    r.detail = std::to_string(shoppers) + " shoppers in " + std::to_string(traces) + " traces, " +
               std::to_string(fires) + " fires match the rule oracle; " + std::to_string(singles) +
               " single-concealer scenarios at recall 1.0";
  }
  return r;
}

Result pickup_oracle() {
  Result r;
  const std::array<std::uint16_t, 6> alphabet = {24, 26, 39, 41, 67, 73};
  std::vector<std::set<std::uint16_t>> sets;
  for (unsigned mask = 0; mask < 64; ++mask) {
    if (__builtin_popcount(mask) > 4) continue;
    std::set<std::uint16_t> s;
    for (int b = 0; b < 6; ++b)
      if (mask & (1u << b)) s.insert(alphabet[b]);
    sets.push_back(s);
  }
  std::size_t cases = 0, wrong = 0;
  for (const auto& prev : sets) {
    for (const auto& now : sets) {
      std::set<std::uint16_t> gone;
      std::set_difference(prev.begin(), prev.end(), now.begin(), now.end(), std::inserter(gone, gone.end()));
      const bool fire = now.size() < prev.size() || !gone.empty();
      for (std::optional<std::uint64_t> armed :
           {std::optional<std::uint64_t>{}, std::optional<std::uint64_t>{4'000}, std::optional<std::uint64_t>{25'000}}) {
        TrackState t = testing::make_track(0);
        t.nearby_classes_prev = prev;
        t.pickup_active_until_ms = armed;
        const bool active = update_pickup(t, now, 10'000, PrefilterConfig{});
        const auto until = fire ? std::optional<std::uint64_t>{20'000} : armed;
        ++cases;
        wrong += active != (until && 10'000 <= *until) || t.pickup_active_until_ms != until || t.nearby_classes_prev != now;
      }
    }
  }
  r.require(wrong == 0, std::to_string(wrong) + " of " + std::to_string(cases) + " cases differ");
  if (r.pass) r.detail = std::to_string(sets.size()) + " sets, " + std::to_string(cases) + " cases agree";
  return r;
}

Result geometry() {
  Result r;
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> pos(0, 1000), size(10, 400), off(-150, 150), conf(0, 1), shift(-300, 300);
  std::size_t scale_bad = 0, translate_bad = 0;
  for (int i = 0; i < 1000; ++i) {
    const BBox p = testing::box_at(pos(rng), pos(rng), size(rng), size(rng));
    std::vector<Detection> dets;
    for (int k = 0; k < 4; ++k) dets.push_back(testing::object(39, testing::box_at(pos(rng), pos(rng), 20, 30)));
    const double s = std::exp2(static_cast<double>(static_cast<int>(rng() % 9) - 4));
    auto sc = [s](BBox b) { return BBox{b.x1 * s, b.y1 * s, b.x2 * s, b.y2 * s}; };
    std::vector<Detection> sd = dets;
    for (auto& d : sd) d.bbox = sc(d.bbox);
    scale_bad += near_object(p, dets).near != near_object(sc(p), sd).near;
  }
  for (int i = 0; i < 1000; ++i) {
    const double cx = pos(rng), cy = pos(rng);
    const BBox box = testing::box_at(cx, cy, 100, 300);
    Keypoints k{};
    for (auto& kp : k) kp = {cx + off(rng), cy + off(rng), conf(rng)};
    const double dx = std::round(shift(rng)), dy = std::round(shift(rng));
    Keypoints m = k;
    for (auto& kp : m) {
      kp.x += dx;
      kp.y += dy;
    }
    translate_bad += hand_toward_body(k, box, PrefilterConfig{}) !=
                     hand_toward_body(m, BBox{box.x1 + dx, box.y1 + dy, box.x2 + dx, box.y2 + dy}, PrefilterConfig{});
  }
  const auto idx = even_sample_indices(50, 5);
  const BBox c1 = crop_with_padding({100, 100, 200, 300}, 640, 480);
  const BBox c2 = crop_with_padding({0, 0, 100, 100}, 640, 480);
  r.require(scale_bad == 0, std::to_string(scale_bad) + " scale-covariance violations");
  r.require(translate_bad == 0, std::to_string(translate_bad) + " translation-invariance violations");
  r.require(idx == std::vector<std::size_t>{0, 12, 25, 37, 49}, "sample indices differ");
  r.require(c1 == BBox{80, 60, 220, 340}, "crop example 1 differs");
  r.require(c2 == BBox{0, 0, 120, 120}, "crop example 2 differs");
  if (r.pass) r.detail = "1000+1000 random instances, indices [0,12,25,37,49], crops (80,60,220,340) and (0,0,120,120)";
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Result hermetic_end_to_end() {
  Result r;
  ScenarioConfig sc;
  sc.seed = 5;
  sc.arrival_rate_per_min = 4;
  sc.browse_fraction = 0.7;
  sc.pickup_fraction = 0.8;
  const Trace trace = generate_trace(sc);
  testing::TempDir dir;

  MockVlmServer server(default_mock_script());
  server.start();
  std::vector<std::string> reports;
  std::size_t alerting = 0, logged = 0, bad_alerts = 0, missing = 0;
  for (int run = 0; run < 2; ++run) {
    PipelineConfig cfg;
    cfg.gateway.api_url = server.url();
    auto store = std::make_shared<AlertStore>(dir / ("run" + std::to_string(run)));
    Pipeline p(cfg, std::shared_ptr<VlmTransport>(make_http_transport(cfg.gateway)), store);
    p.set_tagger(truth_tagger(trace.truth));
    const RunReport rep = replay_events(p, trace.events, ReplayOptions{true, false, trace.truth});
    reports.push_back(to_json(rep).dump());
    if (run == 0) {
      // Independent scan of the persisted log.
      std::set<std::string> ids;
      std::istringstream log(slurp(store->log_path()));
      std::string line;
      while (std::getline(log, line)) {
        const auto j = nlohmann::json::parse(line);
        ids.insert(j.at("alert_id").get<std::string>());
        const std::string cat = j.at("category");
        bad_alerts += cat != "CONFIRMED" && cat != "UNCERTAIN";
      }
      logged = ids.size();
      for (const CandidateOutcome& o : p.outcomes()) {
        if (o.fate != CandidateFate::kVerdict) continue;
        if (*o.category != VerdictCategory::kConfirmed && *o.category != VerdictCategory::kUncertain) continue;
        ++alerting;
        missing += !o.alert_id || !ids.count(*o.alert_id);
      }
    }
  }
  r.require(reports[0] == reports[1], "RunReport differs between runs");
  r.require(alerting > 0, "no alerting verdicts produced");
  r.require(missing == 0, std::to_string(missing) + " alerting verdicts missing from the log");
  r.require(bad_alerts == 0, std::to_string(bad_alerts) + " NORMAL/SKIPPED alerts");
  r.require(logged == alerting, "log holds " + std::to_string(logged) + " alerts for " + std::to_string(alerting) +
                                    " alerting verdicts");
  if (r.pass) {
    r.detail = "byte-identical reports (" + std::to_string(reports[0].size()) + " bytes), " + std::to_string(alerting) +
               " CONFIRMED/UNCERTAIN verdicts all logged, no other alerts";
  }
  return r;
}

Result verdict_parser() {
  Result r;
  const auto corpus = testing::verdict_corpus();
  std::size_t passed = 0;
  for (const auto& c : corpus) {
    const std::string why = testing::check_verdict_case(c);
    if (why.empty()) {
      ++passed;
    } else {
      r.require(false, c.name + ": " + why);
    }
  }
  r.require(corpus.size() == 20, "corpus has " + std::to_string(corpus.size()) + " cases");
  if (r.pass) r.detail = std::to_string(passed) + "/" + std::to_string(corpus.size()) + " cases";
  return r;
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Result()>> criteria[] = {
      {"call-volume bound and reduction factor", call_volume_bound},
      {"confusion metrics table", confusion_table},
      {"cost model", cost},
      {"call-volume projection", call_volume},
      {"rate limiter sliding window", rate_limiter},
      {"retry queue under fault injection", retry_queue},
      {"trigger rule properties", trigger_properties},
      {"pickup oracle equivalence", pickup_oracle},
      {"geometry invariants", geometry},
      {"hermetic end-to-end replay", hermetic_end_to_end},
      {"verdict parser conformance", verdict_parser},
  };
  int failed = 0;
  int n = 0;
  for (const auto& [name, check] : criteria) {
    ++n;
    Result res;
    try {
      res = check();
    } catch (const std::exception& e) {
      res.pass = false;
      res.detail = std::string("exception: ") + e.what();
    }
    failed += !res.pass;
    std::printf("[%s] %2d %s: %s\n", res.pass ? "PASS" : "FAIL", n, name, res.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", n - failed, n);
  return failed == 0 ? 0 : 1;
}
