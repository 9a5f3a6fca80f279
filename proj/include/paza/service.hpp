// HTTP ingest and review API over one live pipeline.
#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "paza/config.hpp"
#include "paza/pipeline.hpp"

namespace paza {

struct HubEvent {
  std::uint64_t seq = 0;
  std::string name;
  std::string data;
};

// Fan-out for server-sent events. Subscribers poll by sequence number; slow
// readers skip whatever fell out of the bounded backlog.
class EventHub {
 public:
  explicit EventHub(std::size_t backlog = 1'000) : backlog_(backlog) {}

  void publish(std::string name, std::string data);
  // Events with seq >= from, waiting up to timeout_ms for the first one.
  std::vector<HubEvent> wait_from(std::uint64_t from, std::uint64_t timeout_ms);
  std::uint64_t next_seq() const;
  void close();
  bool closed() const;

 private:
  std::size_t backlog_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<HubEvent> events_;
  std::uint64_t next_seq_ = 0;
  bool closed_ = false;
};

std::string format_sse(const HubEvent& e);

std::uint64_t wall_clock_ms();

class Service {
 public:
  Service(AppConfig cfg, std::shared_ptr<VlmTransport> transport);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // port 0 picks an ephemeral port. Returns the bound port.
  int start(int port, const std::string& host = "0.0.0.0");
  void stop();

  Pipeline& pipeline() { return *pipeline_; }
  EventHub& hub() { return hub_; }
  int port() const { return port_; }

 private:
  struct Server;

  void housekeeping_loop();

  AppConfig cfg_;
  std::shared_ptr<AlertStore> store_;
  std::unique_ptr<Pipeline> pipeline_;
  EventHub hub_;
  std::unique_ptr<Server> server_;
  std::thread listen_thread_;
  std::thread housekeeping_;
  std::mutex hk_mu_;
  std::condition_variable hk_cv_;
  bool stopping_ = false;
  std::atomic<std::uint64_t> last_ingest_wall_ms_{0};
  int port_ = 0;
};

}  // namespace paza
