// paza: simulate, replay, evaluate, cost, serve, scan, mock.
#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "paza/config.hpp"
#include "paza/evaluate.hpp"
#include "paza/replay.hpp"
#include "paza/service.hpp"
#include "paza/signal_kernels.hpp"
#include "paza/simulator.hpp"

namespace {

using namespace paza;
using nlohmann::json;

volatile std::sig_atomic_t g_stop = 0;
void on_signal(int) { g_stop = 1; }

void wait_for_signal() {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));
}

struct ConfigFlags {
  std::optional<std::string> file;
  std::vector<std::string> sets;
  std::optional<std::string> endpoint;

  void add(CLI::App* cmd) {
    cmd->add_option("--config", file, "JSON config file");
    cmd->add_option("--set", sets, "Override a setting, key=value (repeatable)");
    cmd->add_option("--endpoint", endpoint, "VLM base URL (overrides VLM_API_URL)");
  }

  AppConfig resolve() const {
    std::vector<std::pair<std::string, std::string>> overrides;
    for (const std::string& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    if (endpoint) overrides.emplace_back("vlm_api_url", *endpoint);
    std::optional<std::filesystem::path> path;
    if (file) path = *file;
    return resolve_config(path, process_env(), overrides);
  }
};

void write_json(const json& j, const std::optional<std::string>& path) {
  if (!path || *path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(*path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + *path);
  out << j.dump(2) << '\n';
}

std::shared_ptr<VlmTransport> make_transport(const std::optional<std::string>& mock_script, bool mock,
                                             const GatewayConfig& gw) {
  if (mock_script) return std::make_shared<ScriptedTransport>(load_mock_script(*mock_script));
  if (mock) return std::make_shared<ScriptedTransport>(default_mock_script());
  return std::shared_ptr<VlmTransport>(make_http_transport(gw));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event-driven concealment detection orchestrator"};
  app.require_subcommand(1);

  // simulate
  ScenarioConfig scenario;
  std::string sim_out;
  bool no_keypoints = false;
  auto* sim = app.add_subcommand("simulate", "Generate a synthetic trace and its ground truth");
  sim->add_option("--cameras", scenario.cameras)->check(CLI::PositiveNumber);
  sim->add_option("--fps", scenario.fps)->check(CLI::PositiveNumber);
  sim->add_option("--duration", scenario.duration_s, "Seconds")->check(CLI::NonNegativeNumber);
  sim->add_option("--seed", scenario.seed);
  sim->add_option("--arrival-rate", scenario.arrival_rate_per_min, "Mean shoppers per camera per minute");
  sim->add_option("--browse", scenario.browse_fraction);
  sim->add_option("--pickup", scenario.pickup_fraction, "Given browse");
  sim->add_option("--conceal", scenario.conceal_fraction, "Given pickup");
  sim->add_flag("--no-keypoints", no_keypoints);
  sim->add_option("-o,--output", sim_out, "Trace path (truth goes to <path>.truth.jsonl)")->required();

  // replay
  std::string trace_path;
  std::optional<std::string> mock_script, truth_path, report_path, out_dir, outcomes_path;
  bool use_mock = false, drain = false, wall = false, tag_requests = false, no_tag = false, append = false;
  ConfigFlags replay_cfg;
  auto* replay = app.add_subcommand("replay", "Drive the pipeline over a trace on the virtual clock");
  replay->add_option("trace", trace_path, "FrameEvent JSONL, or - for stdin")->required();
  replay->add_option("--mock-script", mock_script, "Answer with an in-process scripted mock");
  replay->add_flag("--mock", use_mock, "Use the built-in mock script");
  replay->add_option("--truth", truth_path, "Ground truth (default <trace>.truth.jsonl when present)");
  replay->add_flag("--drain", drain, "Tick past the last event until every candidate is terminal");
  replay->add_option("--report", report_path, "Write the RunReport here instead of stdout");
  replay->add_option("--out", out_dir, "Alert store directory");
  replay->add_flag("--append", append, "Allow an existing alert log in --out");
  replay->add_option("--outcomes", outcomes_path, "Write per-candidate outcomes as JSONL");
  replay->add_flag("--wall-clock", wall, "Include wall-clock duration (breaks byte stability)");
  replay->add_flag("--tag-requests", tag_requests, "Send truth tags to an HTTP endpoint (mock servers only)");
  replay->add_flag("--no-tag", no_tag, "Never send truth tags");
  replay_cfg.add(replay);

  // evaluate
  std::optional<std::string> manifest, verdict_log, eval_report, eval_mock;
  ConfigFlags eval_cfg;
  auto* evaluate = app.add_subcommand("evaluate", "Clip-level evaluation over a labelled manifest");
  evaluate->add_option("--manifest", manifest, "Clip manifest JSON");
  evaluate->add_option("--verdicts", verdict_log, "Score recorded verdict text instead of calling an endpoint");
  evaluate->add_option("--mock-script", eval_mock, "Answer with an in-process scripted mock");
  evaluate->add_option("--report", eval_report);
  eval_cfg.add(evaluate);

  // cost
  CostParams cost;
  Range vlm_range{20, 60}, db_range{5, 15}, net_range{5, 10};
  double calls_low = 10, calls_high = 60;
  bool cost_json = false;
  auto* cost_cmd = app.add_subcommand("cost", "Monthly per-store cost and call-volume projection");
  cost_cmd->add_option("--gpu-hr", cost.gpu_usd_per_hr, "GPU price, USD per hour");
  cost_cmd->add_option("--hours", cost.hours_per_day, "Operating hours per day");
  cost_cmd->add_option("--days", cost.days_per_month, "Days per month");
  cost_cmd->add_option("--stores", cost.stores_sharing, "Stores sharing one GPU");
  cost_cmd->add_option("--db", cost.db_usd_month, "Database USD per month");
  cost_cmd->add_option("--network", cost.network_usd_month, "Network USD per month");
  cost_cmd->add_option("--vlm-low", vlm_range.low);
  cost_cmd->add_option("--vlm-high", vlm_range.high);
  cost_cmd->add_option("--db-low", db_range.low);
  cost_cmd->add_option("--db-high", db_range.high);
  cost_cmd->add_option("--net-low", net_range.low);
  cost_cmd->add_option("--net-high", net_range.high);
  cost_cmd->add_option("--calls-low", calls_low, "Calls per hour, low end");
  cost_cmd->add_option("--calls-high", calls_high, "Calls per hour, high end");
  cost_cmd->add_flag("--json", cost_json);

  // serve
  int port = 8080;
  std::string host = "0.0.0.0";
  std::optional<std::string> serve_mock;
  bool serve_use_mock = false;
  ConfigFlags serve_cfg;
  auto* serve = app.add_subcommand("serve", "Run the ingest and review HTTP API");
  serve->add_option("--port", port);
  serve->add_option("--host", host);
  serve->add_option("--mock-script", serve_mock);
  serve->add_flag("--mock", serve_use_mock);
  serve_cfg.add(serve);

  // scan
  std::string scan_trace;
  bool scan_serial = false;
  ConfigFlags scan_cfg;
  auto* scan = app.add_subcommand("scan", "Per-frame signal profile of a trace (no triggering)");
  scan->add_option("trace", scan_trace)->required();
  scan->add_flag("--serial", scan_serial, "Use the single-threaded kernel");
  scan_cfg.add(scan);

  // mock
  int mock_port = 8000;
  std::optional<std::string> mock_path;
  auto* mock = app.add_subcommand("mock", "Serve a scripted mock VLM endpoint");
  mock->add_option("--port", mock_port);
  mock->add_option("--script", mock_path);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*sim) {
      scenario.emit_keypoints = !no_keypoints;
      const Trace t = generate_trace(scenario);
      write_trace(t, sim_out);
      std::cerr << "wrote " << t.events.size() << " events, " << t.truth.shoppers.size() << " shoppers ("
                << t.truth.count(ShopperBehavior::kConceal) << " conceal) to " << sim_out << '\n';
      return 0;
    }

    if (*replay) {
      AppConfig cfg = replay_cfg.resolve();
      const bool mocked = mock_script || use_mock;
      auto transport = make_transport(mock_script, use_mock, cfg.pipeline.gateway);

      ReplayOptions opts;
      opts.drain = drain;
      opts.include_wall_clock = wall;
      if (truth_path) {
        opts.truth = read_truth(*truth_path);
      } else if (trace_path != "-" && std::filesystem::exists(truth_path_for(trace_path))) {
        opts.truth = read_truth(truth_path_for(trace_path));
      }

      const std::filesystem::path dir = out_dir ? std::filesystem::path(*out_dir) : cfg.alert_dir;
      if (!append && std::filesystem::exists(dir / "alerts.jsonl")) {
        std::cerr << "error: " << (dir / "alerts.jsonl").string()
                  << " exists; pick a fresh --out or pass --append\n";
        return 1;
      }
      auto store = std::make_shared<AlertStore>(dir, cfg.pipeline.gateway.jpeg_quality);
      auto images = std::make_shared<const FileImageSource>(cfg.image_dir, cfg.pipeline.gateway.jpeg_quality,
                                                             cfg.pipeline.gateway.max_image_side);
      Pipeline pipeline(cfg.pipeline, transport, store, images);
      if (opts.truth && !no_tag && (mocked || tag_requests)) pipeline.set_tagger(truth_tagger(*opts.truth));

      RunReport report;
      if (trace_path == "-") {
        report = replay_stream(pipeline, std::cin, opts);
      } else {
        std::ifstream in(trace_path);
        if (!in) throw std::runtime_error("cannot read " + trace_path);
        report = replay_stream(pipeline, in, opts);
      }
      write_json(to_json(report), report_path);
      if (outcomes_path) {
        std::ofstream out(*outcomes_path, std::ios::binary | std::ios::trunc);
        for (const auto& o : pipeline.outcomes()) out << to_json(o).dump() << '\n';
      }
      if (report.stats.parse_errors > 0) {
        std::cerr << "error: " << report.stats.parse_errors << " trace lines failed to parse\n";
        return 2;
      }
      return 0;
    }

    if (*evaluate) {
      EvalReport report;
      if (verdict_log) {
        report = evaluate_recorded(*verdict_log);
      } else if (manifest) {
        AppConfig cfg = eval_cfg.resolve();
        auto transport = make_transport(eval_mock, false, cfg.pipeline.gateway);
        report = evaluate_clips(load_manifest(*manifest), *transport, cfg.pipeline.gateway);
      } else {
        std::cerr << "error: evaluate needs --manifest or --verdicts\n";
        return 1;
      }
      write_json(to_json(report), eval_report);
      return 0;
    }

    if (*cost_cmd) {
      const CostBreakdown point = cost_model(cost);
      const CostRanges ranges = sum_cost_ranges(vlm_range, db_range, net_range);
      const CallVolume calls = call_volume_projection(calls_low, calls_high, cost.hours_per_day, cost.days_per_month);
      if (cost_json) {
        std::cout << json{{"vlm_per_store", point.vlm_per_store},
                          {"db", point.db},
                          {"network", point.network},
                          {"total", point.total},
                          {"range_total", {ranges.total.low, ranges.total.high}},
                          {"calls_per_month", {calls.low, calls.high}}}
                         .dump(2)
                  << '\n';
      } else {
        std::cout << format_cost_table(point, ranges) << "calls/month: " << calls.low << " - " << calls.high << '\n';
      }
      return 0;
    }

    if (*serve) {
      AppConfig cfg = serve_cfg.resolve();
      auto transport = make_transport(serve_mock, serve_use_mock, cfg.pipeline.gateway);
      Service service(cfg, transport);
      const int bound = service.start(port, host);
      std::cerr << "listening on " << host << ':' << bound << ", VLM " << cfg.pipeline.gateway.api_url << '\n';
      wait_for_signal();
      service.stop();
      return 0;
    }

    if (*scan) {
      AppConfig cfg = scan_cfg.resolve();
      std::ifstream in(scan_trace);
      if (!in) throw std::runtime_error("cannot read " + scan_trace);
      std::vector<FrameEvent> frames;
      std::string line;
      while (std::getline(in, line)) {
        if (!line.empty()) frames.push_back(parse_frame_event(line));
      }
      const SignalProfile p = scan_serial ? profile_serial(frames, cfg.pipeline.prefilter)
                                          : profile(frames, cfg.pipeline.prefilter);
      std::cout << json{{"frames", p.frames},
                        {"person_frames", p.person_frames},
                        {"near_obj", p.near_obj},
                        {"hand_body", p.hand_body},
                        {"either", p.either},
                        {"threads", scan_serial ? 1 : max_threads()}}
                       .dump(2)
                << '\n';
      return 0;
    }

    if (*mock) {
      MockVlmServer server(mock_path ? load_mock_script(*mock_path) : default_mock_script());
      const int bound = server.start(mock_port);
      std::cerr << "mock VLM on 127.0.0.1:" << bound << '\n';
      wait_for_signal();
      server.stop();
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
