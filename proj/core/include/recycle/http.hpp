#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>

namespace recycle {

struct HttpResponse {
  int status = 0;             // 0 when the request never got a response
  std::string body;
  std::string transport_error;

  bool ok() const noexcept { return status >= 200 && status < 300; }
};

// One connection's worth of request machinery; not shared across threads.
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse post_json(const std::string& path, const std::string& body) = 0;
};

using TransportFactory = std::function<std::unique_ptr<HttpTransport>()>;

// "http://host:port[/prefix]" split into the origin and a path prefix.
struct HttpEndpoint {
  std::string origin;
  std::string path_prefix;

  static HttpEndpoint parse(const std::string& url);
  // Joins prefix and an API path, avoiding a doubled "/v1".
  std::string path_for(const std::string& api_path) const;
};

struct HttpClientOptions {
  std::string bearer_token;
  std::chrono::seconds connect_timeout{10};
  std::chrono::seconds read_timeout{600};
};

TransportFactory http_transport_factory(const std::string& origin, HttpClientOptions options);

// Reads the bearer token from RECYCLE_API_KEY, then OPENAI_API_KEY.
std::string bearer_token_from_env();

// 429, 5xx and transport failures are retryable; other statuses are not.
bool is_retryable_status(int status) noexcept;

// Exponential backoff with full jitter: a uniform draw from
// [0, min(cap, base * 2^attempt)].
class Backoff {
 public:
  Backoff(std::chrono::milliseconds base, std::chrono::milliseconds cap, std::uint64_t seed);
  std::chrono::milliseconds delay(std::uint32_t attempt);

 private:
  std::chrono::milliseconds base_;
  std::chrono::milliseconds cap_;
  std::mt19937_64 rng_;
};

}  // namespace recycle
