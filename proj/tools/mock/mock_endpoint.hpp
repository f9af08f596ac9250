#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

namespace httplib {
class Server;
}

namespace recycle::mock {

struct MockOptions {
  std::uint64_t seed = 0;
  double failure_rate = 0.0;         // fraction of documents that get 500s
  std::uint32_t fail_attempts = 1;   // failing requests per selected document
  std::uint32_t embedding_dim = 64;
};

// Deterministic OpenAI-compatible stand-in: chat completions return a tagged
// rewrite of the draft, embeddings are hashed bags of words.
class MockEndpoint {
 public:
  explicit MockEndpoint(MockOptions options = {});
  ~MockEndpoint();
  MockEndpoint(const MockEndpoint&) = delete;
  MockEndpoint& operator=(const MockEndpoint&) = delete;

  // Binds (port 0 picks a free one) and serves on a background thread.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  // Binds and serves on the calling thread until stop().
  bool serve(const std::string& host, int port);
  void stop();

  // Forgets per-document failure counters and the request count.
  void reset();

  int port() const noexcept { return port_; }
  std::string url() const;  // http://127.0.0.1:<port>/v1
  std::uint64_t requests() const noexcept { return requests_; }
  std::uint64_t failures_served() const noexcept { return failures_; }

  bool selected_for_failure(std::string_view draft) const noexcept;
  static std::string improve(std::string_view draft);
  static std::string think(std::string_view draft);
  std::string completion(std::string_view draft) const;
  std::vector<double> embed(std::string_view text) const;

 private:
  void install_routes();

  MockOptions options_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
  std::mutex mu_;
  std::unordered_map<std::uint64_t, std::uint32_t> failed_;  // draft hash -> 500s served
  std::atomic<std::uint64_t> requests_{0};
  std::atomic<std::uint64_t> failures_{0};
};

// The draft embedded in a guided-rewrite prompt.
std::string_view extract_draft(std::string_view prompt) noexcept;

}  // namespace recycle::mock
