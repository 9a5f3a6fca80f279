#include <httplib.h>

#include "paza/vlm_gateway.hpp"

namespace paza {
namespace {

struct SplitUrl {
  std::string scheme_host_port;
  std::string base_path;
};

SplitUrl split_url(const std::string& url) {
  const std::size_t scheme_end = url.find("://");
  const std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  const std::size_t path_start = url.find('/', host_start);
  if (path_start == std::string::npos) return {url, ""};
  std::string base = url.substr(path_start);
  while (!base.empty() && base.back() == '/') base.pop_back();
  return {url.substr(0, path_start), base};
}

class HttpTransport final : public VlmTransport {
 public:
  explicit HttpTransport(const GatewayConfig& cfg)
      : url_(split_url(cfg.api_url)),
        timeout_(std::chrono::milliseconds(static_cast<long long>(cfg.request_timeout_s * 1000.0))) {}

  TransportResult post(std::string_view path, const std::string& body,
                       const std::map<std::string, std::string>& headers) override {
    httplib::Headers h;
    std::string content_type = "application/json";
    for (const auto& [k, v] : headers) {
      if (k == "Content-Type") {
        content_type = v;
      } else {
        h.emplace(k, v);
      }
    }
    // One client per request so concurrent dispatches do not serialize.
    httplib::Client client(url_.scheme_host_port);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    auto res = client.Post(url_.base_path + std::string(path), h, body, content_type);
    if (!res) {
      const httplib::Error err = res.error();
      const bool timed_out = err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout ||
                             err == httplib::Error::Write;
      return TransportFailure{timed_out ? TransportFailure::Kind::kTimeout : TransportFailure::Kind::kConnection,
                              httplib::to_string(err)};
    }
    return HttpReply{res->status, res->body};
  }

 private:
  SplitUrl url_;
  std::chrono::milliseconds timeout_;
};

}  // namespace

std::unique_ptr<VlmTransport> make_http_transport(const GatewayConfig& cfg) {
  return std::make_unique<HttpTransport>(cfg);
}

}  // namespace paza
