#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "paza/config.hpp"
#include "paza/evaluate.hpp"
#include "paza/image_io.hpp"
#include "paza/pipeline.hpp"
#include "paza/replay.hpp"
#include "paza/service.hpp"
#include "paza/simulator.hpp"
#include "support.hpp"

namespace paza {
namespace {

using nlohmann::json;
using testing::TempDir;

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ScenarioConfig busy(std::uint64_t seed) {
  ScenarioConfig cfg;
  cfg.seed = seed;
  cfg.arrival_rate_per_min = 4;
  cfg.browse_fraction = 0.6;
  return cfg;
}

std::shared_ptr<VlmTransport> mock(MockScript s = default_mock_script()) {
  return std::make_shared<ScriptedTransport>(std::move(s));
}

struct ReplayRun {
  RunReport report;
  std::vector<CandidateOutcome> outcomes;
  std::vector<AlertRecord> alerts;
  std::string report_json;
  std::string log;
};

ReplayRun replay(const Trace& t, const std::filesystem::path& dir, PipelineConfig cfg = {}, MockScript script = default_mock_script(),
           bool drain = true) {
  auto store = std::make_shared<AlertStore>(dir);
  Pipeline p(cfg, mock(std::move(script)), store);
  p.set_tagger(truth_tagger(t.truth));
  ReplayRun r;
  r.report = replay_events(p, t.events, ReplayOptions{drain, false, t.truth});
  r.outcomes = p.outcomes();
  r.alerts = store->list();
  r.report_json = to_json(r.report).dump();
  r.log = slurp(store->log_path());
  return r;
}

TEST(Pipeline, NoPersonsNoCalls) {
  std::vector<FrameEvent> events;
  for (std::uint64_t i = 0; i < 600; ++i) events.push_back(testing::frame("c", i, i * 100));
  auto t = std::make_shared<ScriptedTransport>(default_mock_script());
  Pipeline p(PipelineConfig{}, t);
  const RunReport r = replay_events(p, events, ReplayOptions{true, false, std::nullopt});
  EXPECT_EQ(r.stats.frames_processed, 600u);
  EXPECT_EQ(r.stats.vlm_calls, 0u);
  EXPECT_EQ(r.stats.triggers_fired, 0u);
  EXPECT_EQ(t->responder().request_count(), 0u);
}

TEST(Pipeline, ReplayIsByteStable) {
  const Trace t = generate_trace(busy(21));
  TempDir a, b;
  const ReplayRun ra = replay(t, a.path());
  const ReplayRun rb = replay(t, b.path());
  EXPECT_GT(ra.report.stats.vlm_calls, 0u);
  EXPECT_EQ(ra.report_json, rb.report_json);
  EXPECT_EQ(ra.log, rb.log);
}

TEST(Pipeline, AlertLogMatchesVerdicts) {
  ScenarioConfig sc = busy(22);
  sc.pickup_fraction = 0.8;
  const Trace t = generate_trace(sc);
  TempDir dir;
  const ReplayRun r = replay(t, dir.path());
  std::set<std::string> alert_ids;
  for (const AlertRecord& a : r.alerts) {
    alert_ids.insert(a.alert_id);
    EXPECT_TRUE(a.category == VerdictCategory::kConfirmed || a.category == VerdictCategory::kUncertain);
  }
  std::size_t alerting = 0, normal = 0;
  for (const CandidateOutcome& o : r.outcomes) {
    if (o.fate != CandidateFate::kVerdict) continue;
    if (*o.category == VerdictCategory::kNormal) {
      ++normal;
      EXPECT_FALSE(o.alert_id);
      continue;
    }
    ++alerting;
    ASSERT_TRUE(o.alert_id);
    EXPECT_TRUE(alert_ids.count(*o.alert_id));
  }
  EXPECT_GT(alerting, 0u);
  EXPECT_GT(normal, 0u);
  EXPECT_EQ(alerting, r.alerts.size());
  EXPECT_EQ(r.report.alerts_in_store, r.alerts.size());
}

TEST(Pipeline, FaultsRetriedAndEveryFireTerminal) {
  MockScript s = default_mock_script();
  s.rules.insert(s.rules.begin(), MockRule{"*", "", 0, MockFault::kHttp500, 0.5, std::nullopt});
  const Trace t = generate_trace(busy(23));
  TempDir dir;
  const ReplayRun r = replay(t, dir.path(), PipelineConfig{}, s);
  EXPECT_GT(r.report.stats.retries, 0u);
  EXPECT_EQ(r.report.pending_at_end, 0u);
  EXPECT_EQ(r.outcomes.size(), r.report.stats.triggers_fired);
  std::set<std::uint64_t> ids;
  for (const CandidateOutcome& o : r.outcomes) {
    EXPECT_TRUE(ids.insert(o.candidate_id).second);
    EXPECT_LE(o.attempts, 3);
    EXPECT_GE(o.resolved_ms, o.created_ms);
  }
}

TEST(Pipeline, WithoutDrainReportsPending) {
  ScenarioConfig sc = busy(24);
  sc.arrival_rate_per_min = 8;
  sc.browse_fraction = 1.0;
  const Trace t = generate_trace(sc);
  TempDir dir;
  const ReplayRun r = replay(t, dir.path(), PipelineConfig{}, default_mock_script(), false);
  EXPECT_GT(r.report.stats.skips, 0u);
  EXPECT_EQ(r.outcomes.size() + r.report.pending_at_end, r.report.stats.triggers_fired);
}

// Trigger rule properties observed through the full pipeline.
TEST(Pipeline, FiresRespectDwellAndCooldown) {
  const Trace t = generate_trace(busy(25));
  std::map<TrackKey, std::uint64_t> first_seen;
  for (const FrameEvent& e : t.events) {
    for (const TrackedPerson& p : e.tracks) first_seen.emplace(TrackKey{e.camera_id, p.track_id}, e.timestamp_ms);
  }
  Pipeline p(PipelineConfig{}, mock());
  replay_events(p, t.events, ReplayOptions{});
  std::map<TrackKey, std::uint64_t> last_fire;
  ASSERT_GT(p.fires().size(), 0u);
  for (const FireRecord& f : p.fires()) {
    EXPECT_GE(f.time_ms - first_seen.at(f.key), 3000u);
    if (auto it = last_fire.find(f.key); it != last_fire.end()) {
      EXPECT_GE(f.time_ms - it->second, 10'000u);
    }
    last_fire[f.key] = f.time_ms;
  }
}

TEST(Pipeline, CountsParseErrorsAndStaleEvents) {
  Pipeline p(PipelineConfig{}, mock());
  std::istringstream in(serialize_frame_event(testing::frame("c", 1, 1000)) + "\n{bad json\n\n" +
                        serialize_frame_event(testing::frame("c", 0, 500)) + "\n");
  const RunReport r = replay_stream(p, in, ReplayOptions{});
  EXPECT_EQ(r.stats.parse_errors, 1u);
  EXPECT_EQ(r.stats.stale_events, 1u);
  EXPECT_EQ(r.stats.frames_processed, 1u);
}

TEST(Pipeline, ConfigRejectsMismatchedRateLimits) {
  PipelineConfig cfg;
  cfg.prefilter.rate_limit_per_min = 5;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// snapshots from real pixels

TEST(Pipeline, SnapshotsWrittenFromImages) {
  TempDir dir;
  Image frame{1280, 720, 3, std::vector<std::uint8_t>(1280u * 720u * 3u)};
  for (int y = 0; y < 720; ++y) {
    for (int x = 0; x < 1280; ++x) {
      std::uint8_t* px = frame.at(x, y);
      px[0] = static_cast<std::uint8_t>(x * 7);
      px[1] = static_cast<std::uint8_t>(y * 5);
      px[2] = static_cast<std::uint8_t>((x ^ y) & 0xff);
    }
  }
  ASSERT_TRUE(write_jpeg(dir / "frame.jpg", frame, 95));

  ScenarioConfig sc = busy(26);
  sc.pickup_fraction = 1.0;
  sc.conceal_fraction = 1.0;
  Trace t = generate_trace(sc);
  for (FrameEvent& e : t.events) e.image_ref = "frame.jpg";

  PipelineConfig cfg;
  auto store = std::make_shared<AlertStore>(dir / "alerts");
  auto images = std::make_shared<const FileImageSource>(dir.path(), 80, 768);
  auto transport = std::make_shared<ScriptedTransport>(default_mock_script());
  Pipeline p(cfg, transport, store, images);
  p.set_tagger(truth_tagger(t.truth));
  replay_events(p, t.events, ReplayOptions{true, false, std::nullopt});
  const auto alerts = store->list();
  ASSERT_GT(alerts.size(), 0u);
  for (const AlertRecord& a : alerts) {
    ASSERT_EQ(a.snapshots.size(), a.clip_frames.size());
    for (std::size_t i = 0; i < a.snapshots.size(); ++i) {
      const auto img = load_image(store->dir() / a.snapshots[i]);
      ASSERT_TRUE(img);
      const BBox& r = a.clip_frames[i].crop_rect;
      // The pixel crop rounds the rectangle outward.
      EXPECT_NEAR(img->width, r.x2 - r.x1, 2.0);
      EXPECT_NEAR(img->height, r.y2 - r.y1, 2.0);
    }
  }
  // VLM payloads carry images rather than text descriptions.
  const auto reqs = transport->responder().requests();
  ASSERT_GT(reqs.size(), 0u);
  EXPECT_NE(reqs[0].body.find("data:image/jpeg;base64,"), std::string::npos);
}

// ---------------------------------------------------------------------------
// configuration

TEST(Config, Precedence) {
  TempDir dir;
  std::ofstream(dir / "paza.json") << R"({"tau_d": 4, "rho": 0.6, "vlm_model_name": "file-model", "retention_h": 12})";
  const std::map<std::string, std::string> env = {{"PAZA_TAU_D", "5"}, {"VLM_MODEL_NAME", "env-model"}};
  const EnvLookup lookup = [&](const std::string& k) -> std::optional<std::string> {
    auto it = env.find(k);
    return it == env.end() ? std::nullopt : std::optional<std::string>(it->second);
  };
  const AppConfig c = resolve_config(dir / "paza.json", lookup, {{"tau_d", "6"}});
  EXPECT_DOUBLE_EQ(c.pipeline.prefilter.tau_d_s, 6.0);
  EXPECT_DOUBLE_EQ(c.pipeline.prefilter.rho, 0.6);
  EXPECT_EQ(c.pipeline.gateway.model_name, "env-model");
  EXPECT_DOUBLE_EQ(c.pipeline.alert_retention_h, 12.0);

  const AppConfig d = resolve_config(std::nullopt, lookup, {});
  EXPECT_DOUBLE_EQ(d.pipeline.prefilter.tau_d_s, 5.0);
}

TEST(Config, RateLimitAppliesToBothLayers) {
  const AppConfig c = resolve_config(std::nullopt, [](const std::string&) { return std::nullopt; },
                                     {{"rate_limit", "20"}, {"vlm_api_url", "http://gpu:9000"}});
  EXPECT_EQ(c.pipeline.prefilter.rate_limit_per_min, 20);
  EXPECT_EQ(c.pipeline.gateway.rate_limit_per_min, 20);
  EXPECT_EQ(c.pipeline.gateway.api_url, "http://gpu:9000");
}

TEST(Config, Errors) {
  auto none = [](const std::string&) -> std::optional<std::string> { return std::nullopt; };
  EXPECT_THROW(resolve_config(std::nullopt, none, {{"nonsense", "1"}}), ConfigError);
  EXPECT_THROW(resolve_config(std::nullopt, none, {{"tau_d", "abc"}}), ConfigError);
  EXPECT_THROW(resolve_config(std::nullopt, none, {{"rho", "-1"}}), std::exception);
  TempDir dir;
  std::ofstream(dir / "bad.json") << "[1, 2]";
  EXPECT_THROW(resolve_config(dir / "bad.json", none, {}), ConfigError);
}

TEST(Config, EnvBindingsCoverDocumentedNames) {
  std::set<std::string> names;
  for (const auto& [env, key] : env_bindings()) names.insert(env);
  for (const char* n : {"VLM_API_URL", "VLM_MODEL_NAME", "PAZA_RATE_LIMIT", "PAZA_TAU_D", "PAZA_RHO", "PAZA_THETA_H",
                        "PAZA_TAU_C", "PAZA_K", "PAZA_T", "PAZA_RETENTION_H"})
    EXPECT_TRUE(names.count(n)) << n;
}

// ---------------------------------------------------------------------------
// HTTP service

struct LiveService {
  TempDir dir;
  std::unique_ptr<Service> service;
  std::unique_ptr<httplib::Client> client;

  explicit LiveService(PipelineConfig pc = {}, MockScript script = default_mock_script(), Tagger tagger = nullptr) {
    AppConfig cfg;
    cfg.pipeline = pc;
    cfg.alert_dir = dir / "alerts";
    cfg.image_dir = dir.path();
    service = std::make_unique<Service>(cfg, mock(std::move(script)));
    if (tagger) service->pipeline().set_tagger(std::move(tagger));
    const int port = service->start(0, "127.0.0.1");
    client = std::make_unique<httplib::Client>("127.0.0.1", port);
    client->set_read_timeout(10, 0);
  }

  void ingest(const std::vector<FrameEvent>& events, std::size_t batch = 200) {
    for (std::size_t i = 0; i < events.size(); i += batch) {
      std::string body;
      for (std::size_t j = i; j < std::min(events.size(), i + batch); ++j) body += serialize_frame_event(events[j]) + "\n";
      auto res = client->Post("/api/ingest", body, "application/x-ndjson");
      ASSERT_TRUE(res);
      ASSERT_EQ(res->status, 202);
    }
    service->pipeline().wait_idle();
  }
};

TEST(Service, IngestAlertsAndReview) {
  ScenarioConfig sc = busy(31);
  sc.pickup_fraction = 1.0;
  sc.conceal_fraction = 1.0;
  const Trace t = generate_trace(sc);
  LiveService live(PipelineConfig{}, default_mock_script(), truth_tagger(t.truth));
  live.ingest(t.events);

  auto res = live.client->Get("/api/alerts");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  const json alerts = json::parse(res->body);
  ASSERT_GT(alerts.size(), 0u);
  const std::string id = alerts[0]["alert_id"];

  res = live.client->Get("/api/alerts/" + id);
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(json::parse(res->body)["alert_id"], id);
  EXPECT_EQ(live.client->Get("/api/alerts/alert-999999")->status, 404);
  EXPECT_EQ(live.client->Get("/api/alerts?since_ms=abc")->status, 400);
  EXPECT_EQ(live.client->Get("/api/alerts/" + id + "/snapshots/0")->status, 404);

  const std::string path = "/api/alerts/" + id + "/review";
  EXPECT_EQ(live.client->Post(path, R"({"decision":"maybe"})", "application/json")->status, 400);
  EXPECT_EQ(live.client->Post(path, "not json", "application/json")->status, 400);
  EXPECT_EQ(live.client->Post("/api/alerts/alert-999999/review", R"({"decision":"dismissed"})", "application/json")->status,
            404);
  res = live.client->Post(path, R"({"decision":"dismissed","note":"staff"})", "application/json");
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(json::parse(res->body)["review"], "dismissed");
  EXPECT_EQ(live.client->Post(path, R"({"decision":"confirmed"})", "application/json")->status, 409);

  res = live.client->Get("/api/stats");
  ASSERT_EQ(res->status, 200);
  const json stats = json::parse(res->body);
  EXPECT_EQ(stats["stats"]["frames_processed"], t.events.size());
  EXPECT_EQ(stats["alerts_in_store"], alerts.size());
}

TEST(Service, RejectsGarbageIngest) {
  LiveService live;
  auto res = live.client->Post("/api/ingest", "garbage\nmore garbage\n", "application/x-ndjson");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  res = live.client->Post("/api/ingest", serialize_frame_event(testing::frame("c", 0, 0)) + "\nbad\n",
                          "application/x-ndjson");
  EXPECT_EQ(res->status, 202);
  EXPECT_EQ(json::parse(res->body)["rejected"], 1);
}

TEST(Service, StreamCarriesReviewEvents) {
  ScenarioConfig sc = busy(32);
  sc.pickup_fraction = 1.0;
  sc.conceal_fraction = 1.0;
  const Trace t = generate_trace(sc);
  LiveService live(PipelineConfig{}, default_mock_script(), truth_tagger(t.truth));

  std::string received;
  std::mutex mu;
  std::atomic<bool> done{false};
  std::thread reader([&] {
    httplib::Client c("127.0.0.1", live.service->port());
    c.set_read_timeout(15, 0);
    c.Get("/api/stream", [&](const char* data, std::size_t len) {
      std::lock_guard lock(mu);
      received.append(data, len);
      return !done && received.find("event: alert-reviewed") == std::string::npos;
    });
  });
  // Let the subscriber attach before anything is published.
  std::this_thread::sleep_for(std::chrono::milliseconds(200));
  live.ingest(t.events);
  const json alerts = json::parse(live.client->Get("/api/alerts")->body);
  ASSERT_GT(alerts.size(), 0u);
  live.client->Post("/api/alerts/" + alerts[0]["alert_id"].get<std::string>() + "/review",
                    R"({"decision":"dismissed"})", "application/json");
  for (int i = 0; i < 200; ++i) {
    {
      std::lock_guard lock(mu);
      if (received.find("event: alert-reviewed") != std::string::npos) break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(25));
  }
  done = true;
  reader.join();
  EXPECT_NE(received.find("event: alert-created"), std::string::npos);
  EXPECT_NE(received.find("event: alert-reviewed"), std::string::npos);
  EXPECT_NE(received.find("\"review\":\"dismissed\""), std::string::npos);
}

// The live service and offline replay agree on which alerts a trace produces
// when no rate limiting reorders dispatches.
TEST(Service, MatchesReplay) {
  const Trace t = generate_trace(busy(33));
  PipelineConfig pc;
  pc.prefilter.rate_limit_per_min = 1000;
  pc.gateway.rate_limit_per_min = 1000;
  pc.gateway.max_in_flight = 1;

  TempDir dir;
  const ReplayRun offline = replay(t, dir.path(), pc, default_mock_script(), false);
  LiveService live(pc, default_mock_script(), truth_tagger(t.truth));
  live.ingest(t.events);
  const json online = json::parse(live.client->Get("/api/alerts")->body);

  auto summary = [](const json& a) {
    return a["camera_id"].get<std::string>() + "/" + std::to_string(a["track_id"].get<std::uint64_t>()) + "@" + std::to_string(a["created_ms"].get<std::uint64_t>()) + ":" + a["category"].get<std::string>() +
           "/" + std::to_string(a["confidence"].get<int>());
  };
  std::multiset<std::string> want, got;
  for (const AlertRecord& a : offline.alerts) want.insert(summary(to_json(a)));
  for (const json& a : online) got.insert(summary(a));
  EXPECT_GT(want.size(), 0u);
  EXPECT_EQ(want, got);
  EXPECT_EQ(json::parse(live.client->Get("/api/stats")->body)["stats"]["vlm_calls"], offline.report.stats.vlm_calls);
}

TEST(EventHub, SseFormatting) {
  EXPECT_EQ(format_sse({3, "alert-created", "{\"a\":1}"}), "id: 3\nevent: alert-created\ndata: {\"a\":1}\n\n");
  EXPECT_EQ(format_sse({4, "x", "l1\nl2"}), "id: 4\nevent: x\ndata: l1\ndata: l2\n\n");
  EventHub hub(2);
  hub.publish("a", "1");
  hub.publish("b", "2");
  hub.publish("c", "3");
  const auto ev = hub.wait_from(0, 0);
  ASSERT_EQ(ev.size(), 2u);
  EXPECT_EQ(ev[0].name, "b");
}

// ---------------------------------------------------------------------------
// offline evaluation

TEST(Evaluate, RecordedVerdicts) {
  TempDir dir;
  std::ofstream(dir / "v.jsonl") << R"({"clip":"a","label":1,"verdict":"CONFIRMED\nConfidence: 90"})" << "\n"
                                 << R"({"clip":"b","label":0,"verdict":"UNCERTAIN"})" << "\n"
                                 << R"({"clip":"c","label":"shoplifting","verdict":"NORMAL"})" << "\n"
                                 << R"({"clip":"d","label":false,"verdict":"normal shopping"})" << "\n"
                                 << R"({"clip":"e","label":true,"verdict":"no idea"})" << "\n";
  const EvalReport r = evaluate_recorded(dir / "v.jsonl");
  EXPECT_EQ(r.tp, 1u);
  EXPECT_EQ(r.fp, 1u);
  EXPECT_EQ(r.fn, 1u);
  EXPECT_EQ(r.tn, 1u);
  EXPECT_EQ(r.errors, 1u);
  EXPECT_DOUBLE_EQ(*r.metrics().accuracy, 0.5);
}

TEST(Evaluate, ClipsThroughTransport) {
  TempDir dir;
  Image img{64, 48, 3, std::vector<std::uint8_t>(64u * 48u * 3u, 128)};
  for (const char* clip : {"pos", "neg"}) {
    std::filesystem::create_directories(dir / clip);
    for (int i = 0; i < 8; ++i) write_jpeg(dir / clip / ("f" + std::to_string(i) + ".jpg"), img, 80);
  }
  std::ofstream(dir / "manifest.json") << R"({"clips": [{"dir": "pos", "label": true}, {"dir": "neg", "label": 0},
                                           {"dir": "missing", "label": 1}]})";
  const auto clips = load_manifest(dir / "manifest.json");
  ASSERT_EQ(clips.size(), 3u);
  EXPECT_EQ(list_frames(dir / "pos").size(), 8u);
  MockScript s;
  s.rules = {{"*", "CONFIRMED\nConfidence: 80", 0, MockFault::kNone, 1.0, 1},
             {"*", "NORMAL\nConfidence: 5", 0, MockFault::kNone, 1.0, std::nullopt}};
  ScriptedTransport t(s);
  const EvalReport r = evaluate_clips(clips, t, GatewayConfig{});
  EXPECT_EQ(r.tp, 1u);
  EXPECT_EQ(r.tn, 1u);
  EXPECT_EQ(r.errors, 1u);
  const auto reqs = t.responder().requests();
  ASSERT_EQ(reqs.size(), 2u);
  const json body = json::parse(reqs[0].body);
  EXPECT_EQ(body["messages"][1]["content"].size(), 10u);
  EXPECT_EQ(body["messages"][1]["content"][8]["text"], "[Frame 5/5]");
}

}  // namespace
}  // namespace paza
