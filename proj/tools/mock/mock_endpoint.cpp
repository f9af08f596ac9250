#include "mock_endpoint.hpp"

#include <cmath>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "recycle/hash.hpp"
#include "recycle/rewrite.hpp"
#include "recycle/text.hpp"

namespace recycle::mock {

using nlohmann::json;

std::string_view extract_draft(std::string_view prompt) noexcept {
  constexpr std::string_view kMarker = "Original Draft: ";
  const std::size_t at = prompt.rfind(kMarker);
  return at == std::string_view::npos ? prompt : prompt.substr(at + kMarker.size());
}

MockEndpoint::MockEndpoint(MockOptions options) : options_(options) {}

MockEndpoint::~MockEndpoint() { stop(); }

bool MockEndpoint::selected_for_failure(std::string_view draft) const noexcept {
  if (options_.failure_rate <= 0.0) return false;
  const std::uint64_t h = Hasher().add(options_.seed).add(draft).value();
  return static_cast<double>(h % 10000) < options_.failure_rate * 10000.0;
}

std::string MockEndpoint::improve(std::string_view draft) {
  const auto words = split_whitespace(draft);
  std::string lead;
  for (std::size_t i = 0; i < words.size() && i < 12; ++i) {
    if (i) lead += ' ';
    lead += words[i];
  }
  return "Overview: " + lead + ".\n\n" + std::string(trim(draft)) + "\n\nThis version keeps every point above.";
}

std::string MockEndpoint::think(std::string_view draft) {
  const auto words = split_whitespace(draft);
  return "The draft has " + std::to_string(words.size()) +
         " words. Add an overview line and keep the content.";
}

std::string MockEndpoint::completion(std::string_view draft) const {
  return compose_tagged(think(draft), improve(draft));
}

std::vector<double> MockEndpoint::embed(std::string_view text) const {
  std::vector<double> v(options_.embedding_dim, 0.0);
  if (v.empty()) return v;
  const std::string lower = to_lower(text);
  for (std::string_view w : split_whitespace(lower)) {
    const std::uint64_t h = fnv1a64(w);
    v[h % v.size()] += (h >> 63) != 0 ? -1.0 : 1.0;
  }
  return v;
}

void MockEndpoint::install_routes() {
  server_->new_task_queue = [] { return new httplib::ThreadPool(32); };
  server_->set_keep_alive_timeout(2);
  server_->set_tcp_nodelay(true);

  server_->Post(R"(.*/chat/completions)", [this](const httplib::Request& req, httplib::Response& res) {
    ++requests_;
    json body;
    std::string prompt;
    try {
      body = json::parse(req.body);
      for (const auto& m : body.at("messages")) {
        if (m.value("role", "") == "user") prompt = m.at("content").get<std::string>();
      }
    } catch (const json::exception& e) {
      res.status = 400;
      res.set_content(json{{"error", e.what()}}.dump(), "application/json");
      return;
    }
    const std::string_view draft = extract_draft(prompt);
    if (selected_for_failure(draft)) {
      std::lock_guard lock(mu_);
      std::uint32_t& served = failed_[fnv1a64(draft)];
      if (served < options_.fail_attempts) {
        ++served;
        ++failures_;
        res.status = 500;
        res.set_content(R"({"error":"injected failure"})", "application/json");
        return;
      }
    }
    const std::string content = completion(draft);
    json out{{"id", "mock-" + to_hex64(fnv1a64(prompt))},
             {"object", "chat.completion"},
             {"model", body.value("model", "")},
             {"choices", json::array({json{{"index", 0},
                                           {"message", {{"role", "assistant"}, {"content", content}}},
                                           {"finish_reason", "stop"}}})}};
    res.set_content(out.dump(), "application/json");
  });

  server_->Post(R"(.*/embeddings)", [this](const httplib::Request& req, httplib::Response& res) {
    ++requests_;
    try {
      const json body = json::parse(req.body);
      const json& input = body.at("input");
      std::vector<std::string> texts;
      if (input.is_string()) texts.push_back(input.get<std::string>());
      else texts = input.get<std::vector<std::string>>();
      json data = json::array();
      for (std::size_t i = 0; i < texts.size(); ++i) {
        data.push_back(json{{"object", "embedding"}, {"index", i}, {"embedding", embed(texts[i])}});
      }
      res.set_content(json{{"object", "list"}, {"data", data}}.dump(), "application/json");
    } catch (const json::exception& e) {
      res.status = 400;
      res.set_content(json{{"error", e.what()}}.dump(), "application/json");
    }
  });
}

int MockEndpoint::start(const std::string& host, int port) {
  stop();
  server_ = std::make_unique<httplib::Server>();
  install_routes();
  port_ = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (port_ < 0) {
    server_.reset();
    return -1;
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

bool MockEndpoint::serve(const std::string& host, int port) {
  stop();
  server_ = std::make_unique<httplib::Server>();
  install_routes();
  port_ = port;
  return server_->listen(host, port);
}

void MockEndpoint::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

void MockEndpoint::reset() {
  std::lock_guard lock(mu_);
  failed_.clear();
  requests_ = 0;
  failures_ = 0;
}

std::string MockEndpoint::url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

}  // namespace recycle::mock
