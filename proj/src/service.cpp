#include "paza/service.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

#include <httplib.h>

#include "paza/replay.hpp"

namespace paza {
namespace {

using nlohmann::json;

void reply_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& message) {
  reply_json(res, status, {{"error", message}});
}

}  // namespace

void EventHub::publish(std::string name, std::string data) {
  {
    std::lock_guard lock(mu_);
    events_.push_back({next_seq_++, std::move(name), std::move(data)});
    while (events_.size() > backlog_) events_.pop_front();
  }
  cv_.notify_all();
}

std::vector<HubEvent> EventHub::wait_from(std::uint64_t from, std::uint64_t timeout_ms) {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, std::chrono::milliseconds(timeout_ms), [&] { return closed_ || next_seq_ > from; });
  std::vector<HubEvent> out;
  for (const HubEvent& e : events_) {
    if (e.seq >= from) out.push_back(e);
  }
  return out;
}

std::uint64_t EventHub::next_seq() const {
  std::lock_guard lock(mu_);
  return next_seq_;
}

void EventHub::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool EventHub::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

std::string format_sse(const HubEvent& e) {
  std::ostringstream out;
  out << "id: " << e.seq << "\nevent: " << e.name << '\n';
  std::istringstream lines(e.data);
  std::string line;
  while (std::getline(lines, line)) out << "data: " << line << '\n';
  out << '\n';
  return out.str();
}

std::uint64_t wall_clock_ms() {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
          .count());
}

struct Service::Server {
  httplib::Server http;
};

Service::Service(AppConfig cfg, std::shared_ptr<VlmTransport> transport)
    : cfg_(std::move(cfg)), server_(std::make_unique<Server>()) {
  cfg_.pipeline.async_dispatch = true;
  cfg_.validate();
  store_ = std::make_shared<AlertStore>(cfg_.alert_dir, cfg_.pipeline.gateway.jpeg_quality);
  auto images = std::make_shared<const FileImageSource>(cfg_.image_dir, cfg_.pipeline.gateway.jpeg_quality,
                                                         cfg_.pipeline.gateway.max_image_side);
  pipeline_ = std::make_unique<Pipeline>(cfg_.pipeline, std::move(transport), store_, std::move(images));
  store_->set_listener([this](StoreEvent ev, const AlertRecord& a) {
    switch (ev) {
      case StoreEvent::kAlertCreated:
        hub_.publish("alert-created", to_json(a).dump());
        break;
      case StoreEvent::kAlertReviewed:
        hub_.publish("alert-reviewed", to_json(a).dump());
        break;
      case StoreEvent::kSnapshotsPurged:
        break;
    }
  });

  auto& http = server_->http;

  http.Post("/api/ingest", [this](const httplib::Request& req, httplib::Response& res) {
    std::istringstream in(req.body);
    std::string line;
    std::uint64_t accepted = 0;
    std::uint64_t rejected = 0;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      (pipeline_->ingest_line(line) ? accepted : rejected)++;
    }
    last_ingest_wall_ms_ = wall_clock_ms();
    reply_json(res, accepted == 0 && rejected > 0 ? 400 : 202, {{"accepted", accepted}, {"rejected", rejected}});
  });

  http.Get("/api/alerts", [this](const httplib::Request& req, httplib::Response& res) {
    std::uint64_t since = 0;
    if (req.has_param("since_ms")) {
      try {
        since = std::stoull(req.get_param_value("since_ms"));
      } catch (const std::exception&) {
        return reply_error(res, 400, "since_ms must be an unsigned integer");
      }
    }
    json out = json::array();
    for (const AlertRecord& a : store_->list(since)) out.push_back(to_json(a));
    reply_json(res, 200, out);
  });

  http.Get(R"(/api/alerts/([A-Za-z0-9_-]+))", [this](const httplib::Request& req, httplib::Response& res) {
    if (auto a = store_->get(req.matches[1])) return reply_json(res, 200, to_json(*a));
    reply_error(res, 404, "no such alert");
  });

  http.Get(R"(/api/alerts/([A-Za-z0-9_-]+)/snapshots/(\d+))",
           [this](const httplib::Request& req, httplib::Response& res) {
             auto a = store_->get(req.matches[1]);
             const std::size_t n = std::stoul(req.matches[2]);
             if (!a || n >= a->snapshots.size()) return reply_error(res, 404, "no such snapshot");
             std::ifstream in(store_->dir() / a->snapshots[n], std::ios::binary);
             if (!in) return reply_error(res, 404, "snapshot missing");
             std::ostringstream buf;
             buf << in.rdbuf();
             res.set_content(buf.str(), "image/jpeg");
           });

  http.Post(R"(/api/alerts/([A-Za-z0-9_-]+)/review)", [this](const httplib::Request& req, httplib::Response& res) {
    const json body = json::parse(req.body, nullptr, false);
    if (!body.is_object() || !body.contains("decision") || !body["decision"].is_string()) {
      return reply_error(res, 400, "body must be {\"decision\": \"confirmed\"|\"dismissed\"}");
    }
    const auto decision = review_status_from_string(body["decision"].get<std::string>());
    if (!decision || *decision == ReviewStatus::kPending) {
      return reply_error(res, 400, "decision must be confirmed or dismissed");
    }
    std::optional<std::string> note;
    if (body.contains("note") && body["note"].is_string()) note = body["note"].get<std::string>();
    try {
      if (auto a = store_->review(req.matches[1], *decision, std::move(note), wall_clock_ms())) {
        return reply_json(res, 200, to_json(*a));
      }
      reply_error(res, 404, "no such alert");
    } catch (const ReviewConflict& e) {
      reply_error(res, 409, e.what());
    }
  });

  http.Get("/api/stats", [this](const httplib::Request&, httplib::Response& res) {
    reply_json(res, 200, to_json(make_report(*pipeline_, std::nullopt)));
  });

  http.Get("/api/stream", [this](const httplib::Request&, httplib::Response& res) {
    auto cursor = std::make_shared<std::uint64_t>(hub_.next_seq());
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider("text/event-stream", [this, cursor](std::size_t, httplib::DataSink& sink) {
      if (hub_.closed()) return false;
      const auto events = hub_.wait_from(*cursor, 1'000);
      if (events.empty()) {
        const std::string ping = ": keepalive\n\n";
        return sink.write(ping.data(), ping.size());
      }
      for (const HubEvent& e : events) {
        const std::string chunk = format_sse(e);
        if (!sink.write(chunk.data(), chunk.size())) return false;
        *cursor = e.seq + 1;
      }
      return true;
    });
  });
}

Service::~Service() { stop(); }

int Service::start(int port, const std::string& host) {
  auto& http = server_->http;
  port_ = port == 0 ? http.bind_to_any_port(host) : (http.bind_to_port(host, port) ? port : -1);
  if (port_ < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  listen_thread_ = std::thread([this] { server_->http.listen_after_bind(); });
  http.wait_until_ready();
  housekeeping_ = std::thread([this] { housekeeping_loop(); });
  return port_;
}

void Service::stop() {
  {
    std::lock_guard lock(hk_mu_);
    if (stopping_) return;
    stopping_ = true;
  }
  hk_cv_.notify_all();
  hub_.close();
  server_->http.stop();
  if (listen_thread_.joinable()) listen_thread_.join();
  if (housekeeping_.joinable()) housekeeping_.join();
  pipeline_->wait_idle();
}

void Service::housekeeping_loop() {
  using namespace std::chrono_literals;
  std::uint64_t last_cleanup = 0;
  std::unique_lock lock(hk_mu_);
  while (!hk_cv_.wait_for(lock, 1s, [this] { return stopping_; })) {
    lock.unlock();
    const std::uint64_t now = wall_clock_ms();
    // Without fresh events the event clock stalls; keep the retry queue
    // moving by advancing it with wall time.
    if (auto clock = pipeline_->clock_ms(); clock && now - last_ingest_wall_ms_ >= 1'000) {
      pipeline_->advance(*clock + kRetryTickMs);
    }
    if (now - last_cleanup >= 60'000) {
      store_->cleanup_retention(now, cfg_.pipeline.alert_retention_h);
      last_cleanup = now;
    }
    hub_.publish("stats-tick", to_json(make_report(*pipeline_, std::nullopt)).dump());
    lock.lock();
  }
}

}  // namespace paza
