#include "recycle/http.hpp"

#include <algorithm>
#include <cstdlib>

#include <httplib.h>

#include "recycle/error.hpp"

namespace recycle {

HttpEndpoint HttpEndpoint::parse(const std::string& url) {
  const std::size_t scheme = url.find("://");
  if (scheme == std::string::npos) {
    throw Error(ErrorCode::kConfigInvalid, "endpoint URL needs a scheme: '" + url + "'");
  }
  const std::string proto = url.substr(0, scheme);
  if (proto != "http" && proto != "https") {
    throw Error(ErrorCode::kConfigInvalid, "unsupported URL scheme '" + proto + "'");
  }
  const std::size_t path = url.find('/', scheme + 3);
  HttpEndpoint ep;
  ep.origin = url.substr(0, path);
  if (path != std::string::npos) ep.path_prefix = url.substr(path);
  while (!ep.path_prefix.empty() && ep.path_prefix.back() == '/') ep.path_prefix.pop_back();
  return ep;
}

std::string HttpEndpoint::path_for(const std::string& api_path) const {
  // api_path is like "/v1/chat/completions".
  if (path_prefix.empty()) return api_path;
  const std::string tail = api_path.starts_with("/v1/") ? api_path.substr(3) : api_path;
  if (path_prefix.ends_with(tail)) return path_prefix;
  if (path_prefix.ends_with("/v1")) return path_prefix + tail;
  return path_prefix + api_path;
}

namespace {

class HttplibTransport final : public HttpTransport {
 public:
  HttplibTransport(const std::string& origin, const HttpClientOptions& options) : client_(origin) {
    client_.set_connection_timeout(options.connect_timeout);
    client_.set_read_timeout(options.read_timeout);
    client_.set_write_timeout(options.read_timeout);
    client_.set_keep_alive(true);
    client_.set_tcp_nodelay(true);
    if (!options.bearer_token.empty()) client_.set_bearer_token_auth(options.bearer_token);
  }

  HttpResponse post_json(const std::string& path, const std::string& body) override {
    HttpResponse out;
    httplib::Result res = client_.Post(path, body, "application/json");
    if (!res) {
      out.transport_error = httplib::to_string(res.error());
      return out;
    }
    out.status = res->status;
    out.body = std::move(res->body);
    return out;
  }

 private:
  httplib::Client client_;
};

}  // namespace

TransportFactory http_transport_factory(const std::string& origin, HttpClientOptions options) {
  return [origin, options]() -> std::unique_ptr<HttpTransport> {
    return std::make_unique<HttplibTransport>(origin, options);
  };
}

std::string bearer_token_from_env() {
  for (const char* name : {"RECYCLE_API_KEY", "OPENAI_API_KEY"}) {
    if (const char* v = std::getenv(name); v != nullptr && *v != '\0') return v;
  }
  return {};
}

bool is_retryable_status(int status) noexcept {
  return status == 0 || status == 429 || status >= 500;
}

Backoff::Backoff(std::chrono::milliseconds base, std::chrono::milliseconds cap, std::uint64_t seed)
    : base_(base), cap_(cap), rng_(seed) {}

std::chrono::milliseconds Backoff::delay(std::uint32_t attempt) {
  const std::int64_t base = std::max<std::int64_t>(base_.count(), 0);
  const std::int64_t cap = std::max<std::int64_t>(cap_.count(), 0);
  std::int64_t ceiling = base;
  for (std::uint32_t i = 0; i < attempt && ceiling < cap; ++i) ceiling *= 2;
  ceiling = std::min(ceiling, cap);
  if (ceiling <= 0) return std::chrono::milliseconds{0};
  const auto draw = static_cast<std::int64_t>(rng_() % static_cast<std::uint64_t>(ceiling + 1));
  return std::chrono::milliseconds{draw};
}

}  // namespace recycle
