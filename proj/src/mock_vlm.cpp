#include <chrono>
#include <fstream>
#include <stdexcept>
#include <thread>

#include <httplib.h>

#include "paza/simulator.hpp"

namespace paza {
namespace {

using nlohmann::json;

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double unit(std::uint64_t seed, std::uint64_t request, std::uint64_t rule) {
  return static_cast<double>(mix(mix(seed) ^ mix(request * 0x9e37ULL + rule)) >> 11) * 0x1.0p-53;
}

}  // namespace

std::string to_string(MockFault f) {
  switch (f) {
    case MockFault::kNone:
      return "none";
    case MockFault::kHttp500:
      return "http_500";
    case MockFault::kHttp429:
      return "http_429";
    case MockFault::kTimeout:
      return "timeout";
    case MockFault::kMalformed:
      return "malformed";
  }
  return "none";
}

std::optional<MockFault> mock_fault_from_string(std::string_view s) {
  if (s == "none") return MockFault::kNone;
  if (s == "http_500") return MockFault::kHttp500;
  if (s == "http_429") return MockFault::kHttp429;
  if (s == "timeout") return MockFault::kTimeout;
  if (s == "malformed") return MockFault::kMalformed;
  return std::nullopt;
}

void MockScript::validate() const {
  if (rules.empty()) throw std::invalid_argument("mock script has no rules");
  const MockRule& last = rules.back();
  if (last.match != "*" || last.probability < 1.0 || last.times) {
    throw std::invalid_argument("mock script must end with an unconditional \"*\" rule");
  }
  for (const MockRule& r : rules) {
    if (!(r.probability >= 0.0 && r.probability <= 1.0)) throw std::invalid_argument("rule probability outside [0,1]");
  }
}

MockScript mock_script_from_json(const json& j) {
  MockScript s;
  s.seed = j.value("seed", s.seed);
  for (const json& r : j.at("rules")) {
    MockRule rule;
    rule.match = r.value("match", "*");
    rule.respond = r.value("respond", "");
    rule.latency_ms = r.value("latency_ms", std::uint64_t{0});
    const auto fault = mock_fault_from_string(r.value("fault", "none"));
    if (!fault) throw std::invalid_argument("unknown fault " + r.value("fault", std::string{}));
    rule.fault = *fault;
    rule.probability = r.value("probability", 1.0);
    if (r.contains("times") && !r["times"].is_null()) rule.times = r["times"].get<std::uint64_t>();
    s.rules.push_back(std::move(rule));
  }
  s.validate();
  return s;
}

MockScript load_mock_script(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return mock_script_from_json(json::parse(in));
}

MockScript default_mock_script() {
  MockScript s;
  s.rules = {
      {"conceal", "VERDICT: CONFIRMED\nCONFIDENCE: 85\nDESCRIPTION: Item picked from the shelf is moved under the jacket.",
       0, MockFault::kNone, 1.0, std::nullopt},
      {"pickup_no_conceal",
       "VERDICT: UNCERTAIN\nCONFIDENCE: 45\nDESCRIPTION: Item handled near the body; placement unclear.", 0,
       MockFault::kNone, 1.0, std::nullopt},
      {"*", "VERDICT: NORMAL\nCONFIDENCE: 10\nDESCRIPTION: Ordinary browsing.", 0, MockFault::kNone, 1.0,
       std::nullopt},
  };
  return s;
}

MockResponder::MockResponder(MockScript script) : script_(std::move(script)), uses_(script_.rules.size(), 0) {
  script_.validate();
}

MockDecision MockResponder::decide(const std::optional<std::string>& tag) {
  std::lock_guard lock(mu_);
  const std::uint64_t n = counter_++;
  for (std::size_t i = 0; i < script_.rules.size(); ++i) {
    const MockRule& r = script_.rules[i];
    if (r.match != "*" && (!tag || *tag != r.match)) continue;
    if (r.times && uses_[i] >= *r.times) continue;
    if (r.probability < 1.0 && unit(script_.seed, n, i) >= r.probability) continue;
    ++uses_[i];
    return MockDecision{r.fault, r.respond, r.latency_ms, i};
  }
  // validate() guarantees a catch-all, so this is unreachable.
  throw std::logic_error("no mock rule matched");
}

void MockResponder::record(RecordedRequest request) {
  std::lock_guard lock(mu_);
  requests_.push_back(std::move(request));
}

std::vector<RecordedRequest> MockResponder::requests() const {
  std::lock_guard lock(mu_);
  return requests_;
}

std::size_t MockResponder::request_count() const {
  std::lock_guard lock(mu_);
  return requests_.size();
}

std::string MockResponder::completion_body(const std::string& content, const std::string& model) {
  json j = {{"id", "chatcmpl-mock"},
            {"object", "chat.completion"},
            {"model", model},
            {"choices", json::array({{{"index", 0},
                                      {"message", {{"role", "assistant"}, {"content", content}}},
                                      {"finish_reason", "stop"}}})}};
  return j.dump();
}

namespace {

std::string model_of(const std::string& body) {
  const json j = json::parse(body, nullptr, false);
  if (j.is_object() && j.contains("model") && j["model"].is_string()) return j["model"].get<std::string>();
  return "mock";
}

}  // namespace

TransportResult ScriptedTransport::post(std::string_view, const std::string& body,
                                        const std::map<std::string, std::string>& headers) {
  std::optional<std::string> tag;
  if (auto it = headers.find(std::string(kTestTagHeader)); it != headers.end()) tag = it->second;
  const MockDecision d = responder_->decide(tag);
  responder_->record({body, headers, tag});
  switch (d.fault) {
    case MockFault::kHttp500:
      return HttpReply{500, R"({"error":"injected"})"};
    case MockFault::kHttp429:
      return HttpReply{429, R"({"error":"rate limited"})"};
    case MockFault::kTimeout:
      return TransportFailure{TransportFailure::Kind::kTimeout, "injected timeout"};
    case MockFault::kMalformed:
      return HttpReply{200, "not json"};
    case MockFault::kNone:
      break;
  }
  return HttpReply{200, MockResponder::completion_body(d.content, model_of(body))};
}

struct MockVlmServer::Impl {
  httplib::Server server;
  std::thread thread;
};

MockVlmServer::MockVlmServer(MockScript script, std::uint64_t timeout_sleep_ms)
    : impl_(std::make_unique<Impl>()),
      responder_(std::make_shared<MockResponder>(std::move(script))),
      timeout_sleep_ms_(timeout_sleep_ms) {
  auto responder = responder_;
  const std::uint64_t sleep_ms = timeout_sleep_ms_;
  impl_->server.Post(std::string(kChatCompletionsPath), [responder, sleep_ms](const httplib::Request& req,
                                                                              httplib::Response& res) {
    std::optional<std::string> tag;
    if (req.has_header(std::string(kTestTagHeader))) tag = req.get_header_value(std::string(kTestTagHeader));
    const MockDecision d = responder->decide(tag);
    std::map<std::string, std::string> headers(req.headers.begin(), req.headers.end());
    responder->record({req.body, std::move(headers), tag});
    if (d.latency_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(d.latency_ms));
    switch (d.fault) {
      case MockFault::kHttp500:
        res.status = 500;
        res.set_content(R"({"error":"injected"})", "application/json");
        return;
      case MockFault::kHttp429:
        res.status = 429;
        res.set_content(R"({"error":"rate limited"})", "application/json");
        return;
      case MockFault::kTimeout:
        std::this_thread::sleep_for(std::chrono::milliseconds(sleep_ms));
        res.status = 504;
        return;
      case MockFault::kMalformed:
        res.set_content("not json", "application/json");
        return;
      case MockFault::kNone:
        break;
    }
    res.set_content(MockResponder::completion_body(d.content, model_of(req.body)), "application/json");
  });
}

MockVlmServer::~MockVlmServer() { stop(); }

int MockVlmServer::start(int port, const std::string& host) {
  host_ = host;
  if (port == 0) {
    port_ = impl_->server.bind_to_any_port(host);
  } else {
    port_ = impl_->server.bind_to_port(host, port) ? port : -1;
  }
  if (port_ < 0) throw std::runtime_error("mock VLM cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port_;
}

void MockVlmServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::string MockVlmServer::url() const { return "http://" + host_ + ":" + std::to_string(port_); }

}  // namespace paza
