#include "recycle/rewrite.hpp"

#include <atomic>
#include <condition_variable>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>
#include <unordered_map>
#include <variant>

#include "recycle/error.hpp"
#include "recycle/hash.hpp"
#include "recycle/text.hpp"

namespace recycle {

using nlohmann::json;

void GenerationConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::kConfigInvalid, m); };
  if (!(temperature >= 0.0)) fail("temperature must be >= 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) fail("top_p must lie in (0, 1]");
  if (max_tokens < 1) fail("max_tokens must be >= 1");
  if (max_input_tokens < 1) fail("max_input_tokens must be >= 1");
  if (max_concurrency < 1) fail("max_concurrency must be >= 1");
  if (endpoint_url.empty()) fail("endpoint_url is empty");
  HttpEndpoint::parse(endpoint_url);
}

json to_json(const GenerationConfig& c) {
  json j{{"endpoint_url", c.endpoint_url},
         {"model_name", c.model_name},
         {"temperature", c.temperature},
         {"top_p", c.top_p},
         {"max_tokens", c.max_tokens},
         {"max_input_tokens", c.max_input_tokens},
         {"max_concurrency", c.max_concurrency},
         {"retry_limit", c.retry_limit},
         {"retry_base_ms", c.retry_base_ms},
         {"retry_cap_ms", c.retry_cap_ms},
         {"max_requests", c.max_requests},
         {"read_timeout_s", c.read_timeout_s}};
  j["seed"] = c.seed ? json(*c.seed) : json(nullptr);
  return j;
}

GenerationConfig generation_config_from_json(const json& j) {
  GenerationConfig c;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "endpoint_url") c.endpoint_url = v.get<std::string>();
      else if (key == "model_name") c.model_name = v.get<std::string>();
      else if (key == "temperature") c.temperature = v.get<double>();
      else if (key == "top_p") c.top_p = v.get<double>();
      else if (key == "max_tokens") c.max_tokens = v.get<std::uint32_t>();
      else if (key == "max_input_tokens") c.max_input_tokens = v.get<std::uint64_t>();
      else if (key == "max_concurrency") c.max_concurrency = v.get<std::uint32_t>();
      else if (key == "retry_limit") c.retry_limit = v.get<std::uint32_t>();
      else if (key == "retry_base_ms") c.retry_base_ms = v.get<std::uint32_t>();
      else if (key == "retry_cap_ms") c.retry_cap_ms = v.get<std::uint32_t>();
      else if (key == "max_requests") c.max_requests = v.get<std::uint64_t>();
      else if (key == "read_timeout_s") c.read_timeout_s = v.get<std::uint32_t>();
      else if (key == "seed") {
        if (v.is_null()) c.seed.reset();
        else c.seed = v.get<std::int64_t>();
      } else {
        throw Error(ErrorCode::kConfigInvalid, "unknown generation key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfigInvalid, std::string("generation config: ") + e.what());
  }
  return c;
}

Prompt build_prompt(const Document& doc, const Tokenizer& tokenizer, std::uint64_t max_input_tokens) {
  if (trim(doc.text).empty()) throw Error(ErrorCode::kEmptyDocument, "document '" + doc.id + "' is empty");
  Prompt p;
  const std::size_t keep = token_prefix_length(tokenizer, doc.text, max_input_tokens, &p.truncated);
  const std::string_view body = std::string_view(doc.text).substr(0, keep);
  if (trim(body).empty()) {
    throw Error(ErrorCode::kEmptyDocument, "document '" + doc.id + "' is empty after truncation");
  }
  p.kept_tokens = p.truncated ? max_input_tokens : tokenizer.count(body);
  const std::string_view tmpl = prompt_template();
  const std::size_t at = tmpl.find(kDraftPlaceholder);
  p.text.reserve(tmpl.size() + body.size());
  p.text.append(tmpl.substr(0, at));
  p.text.append(body);
  p.text.append(tmpl.substr(at + kDraftPlaceholder.size()));
  return p;
}

json chat_request_body(const std::string& prompt, const GenerationConfig& cfg) {
  json body{{"model", cfg.model_name},
            {"messages", json::array({json{{"role", "user"}, {"content", prompt}}})},
            {"temperature", cfg.temperature},
            {"top_p", cfg.top_p},
            {"max_tokens", cfg.max_tokens}};
  if (cfg.seed) body["seed"] = *cfg.seed;
  return body;
}

namespace {

std::optional<std::string_view> between(std::string_view s, std::string_view open,
                                        std::string_view close) {
  const std::size_t a = s.find(open);
  if (a == std::string_view::npos) return std::nullopt;
  const std::size_t start = a + open.size();
  const std::size_t b = s.find(close, start);
  if (b == std::string_view::npos) return std::nullopt;
  return s.substr(start, b - start);
}

}  // namespace

TaggedSpans parse_tagged(std::string_view raw) {
  TaggedSpans out;
  const auto improved = between(raw, kImprovedStart, kImprovedEnd);
  if (!improved) throw Error(ErrorCode::kMissingImprovedTags, "no improved-response tag pair");
  out.improved = std::string(trim(*improved));
  if (out.improved.empty()) throw Error(ErrorCode::kMissingImprovedTags, "empty improved response");
  if (const auto thinking = between(raw, kThinkingStart, kThinkingEnd)) {
    out.thinking = std::string(trim(*thinking));
  }
  return out;
}

std::string compose_tagged(std::string_view thinking, std::string_view improved) {
  std::string out;
  out.append(kThinkingStart).append("\n").append(thinking).append("\n").append(kThinkingEnd);
  out.append("\n");
  out.append(kImprovedStart).append("\n").append(improved).append("\n").append(kImprovedEnd);
  return out;
}

std::string scrub_tags(std::string_view text) {
  std::string out(text);
  for (std::string_view tag : {kThinkingStart, kThinkingEnd, kImprovedStart, kImprovedEnd}) {
    for (std::size_t at = out.find(tag); at != std::string::npos; at = out.find(tag, at)) {
      out.erase(at, tag.size());
    }
  }
  return out;
}

bool contains_tag_marker(std::string_view text) noexcept {
  for (std::string_view tag : {kThinkingStart, kThinkingEnd, kImprovedStart, kImprovedEnd}) {
    if (text.find(tag) != std::string_view::npos) return true;
  }
  return false;
}

std::string_view to_string(FinishReason r) noexcept {
  switch (r) {
    case FinishReason::kStop: return "stop";
    case FinishReason::kLength: return "length";
    case FinishReason::kError: return "error";
  }
  return "error";
}

FinishReason finish_reason_from_string(std::string_view s) noexcept {
  if (s == "stop") return FinishReason::kStop;
  if (s == "length") return FinishReason::kLength;
  return FinishReason::kError;
}

json to_json(const RewriteOutput& o) {
  return json{{"doc_id", o.doc_id},
              {"thinking", o.thinking},
              {"improved", o.improved},
              {"raw_completion", o.raw_completion},
              {"finish_reason", to_string(o.finish_reason)},
              {"attempt_count", o.attempt_count}};
}

RewriteOutput rewrite_output_from_json(const json& j) {
  RewriteOutput o;
  o.doc_id = j.at("doc_id").get<std::string>();
  o.thinking = j.at("thinking").get<std::string>();
  o.improved = j.at("improved").get<std::string>();
  o.raw_completion = j.at("raw_completion").get<std::string>();
  o.finish_reason = finish_reason_from_string(j.at("finish_reason").get<std::string>());
  o.attempt_count = j.at("attempt_count").get<std::uint32_t>();
  return o;
}

Document make_rewritten_document(const Document& source, const RewriteOutput& out,
                                 const Tokenizer& tokenizer, bool truncated) {
  Document doc;
  doc.id = source.id;
  doc.text = std::string(trim(scrub_tags(out.improved)));
  doc.url = source.url;
  doc.source_tag = SourceTag::kRewritten;
  doc.token_count = tokenizer.count(doc.text);
  doc.metadata = source.metadata;
  doc.metadata["finish_reason"] = std::string(to_string(out.finish_reason));
  if (truncated) doc.metadata["input_truncated"] = "true";
  return doc;
}

// ---- corpus run --------------------------------------------------------------

namespace {

struct Success {
  RewriteOutput output;
  bool truncated = false;
};

struct Abandoned {};

using Outcome = std::variant<Success, FailureRecord, Abandoned>;

json ledger_entry(const std::string& id, std::string_view status, std::uint32_t attempts,
                  const std::string& reason = {}) {
  json j{{"doc_id", id}, {"status", status}, {"attempt_count", attempts}};
  if (!reason.empty()) j["reason"] = reason;
  return j;
}

json completion_entry(const Success& s) {
  json j = to_json(s.output);
  j["input_truncated"] = s.truncated;
  return j;
}

json failure_entry(const FailureRecord& f) {
  return json{{"doc_id", f.doc_id},
              {"reason", f.reason},
              {"attempt_count", f.attempt_count},
              {"last_http_status", f.last_http_status}};
}

// Reads a JSONL file, ignoring a torn final line from an interrupted run.
std::vector<json> read_jsonl_tolerant(const fs::path& path) {
  std::vector<json> out;
  if (!fs::exists(path)) return out;
  std::ifstream in(path, std::ios::binary);
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception&) {
    }
  }
  return out;
}

class AppendLog {
 public:
  AppendLog(const fs::path& path, bool truncate)
      : out_(path, std::ios::binary | (truncate ? std::ios::trunc : std::ios::app)) {
    if (!out_) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
  }
  void append(const json& j) {
    out_ << j.dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

class RewriteRun {
 public:
  RewriteRun(const CorpusManifest& manifest, const GenerationConfig& cfg, const RewriteOptions& opts,
             TransportFactory transport)
      : manifest_(manifest), cfg_(cfg), opts_(opts), transport_(std::move(transport)) {
    tokenizer_ = get_tokenizer(manifest.tokenizer_id);
    endpoint_ = HttpEndpoint::parse(cfg.endpoint_url);
    api_path_ = endpoint_.path_for("/v1/chat/completions");
    if (!transport_) {
      HttpClientOptions http;
      http.bearer_token = bearer_token_from_env();
      http.read_timeout = std::chrono::seconds(cfg.read_timeout_s);
      transport_ = http_transport_factory(endpoint_.origin, http);
    }
  }

  RewriteSummary run();

 private:
  Outcome process(HttpTransport& http, const Document& doc, Backoff& backoff);
  void worker(std::size_t worker_index);

  const CorpusManifest& manifest_;
  const GenerationConfig& cfg_;
  const RewriteOptions& opts_;
  TransportFactory transport_;
  std::shared_ptr<const Tokenizer> tokenizer_;
  HttpEndpoint endpoint_;
  std::string api_path_;

  std::vector<Document> docs_;
  std::vector<std::size_t> pending_;
  std::vector<std::optional<Outcome>> slots_;  // reorder buffer, by input index
  std::mutex mu_;
  std::condition_variable ready_;
  std::atomic<std::size_t> next_pending_{0};
  std::atomic<std::uint64_t> requests_{0};
  std::atomic<bool> any_response_{false};
  std::atomic<bool> budget_hit_{false};
  std::atomic<bool> unreachable_{false};
  std::unique_ptr<AppendLog> ledger_;
  std::unique_ptr<AppendLog> completions_;
};

Outcome RewriteRun::process(HttpTransport& http, const Document& doc, Backoff& backoff) {
  Prompt prompt;
  try {
    prompt = build_prompt(doc, *tokenizer_, cfg_.max_input_tokens);
  } catch (const Error& e) {
    return FailureRecord{doc.id, std::string(to_string(e.code())), 0, 0};
  }
  const std::string body = chat_request_body(prompt.text, cfg_).dump();
  FailureRecord fail{doc.id, "", 0, 0};
  bool only_transport_errors = true;
  for (std::uint32_t attempt = 0; attempt <= cfg_.retry_limit; ++attempt) {
    if (unreachable_) return Abandoned{};
    if (cfg_.max_requests != 0 && requests_.fetch_add(1) >= cfg_.max_requests) {
      budget_hit_ = true;
      return Abandoned{};
    }
    if (cfg_.max_requests == 0) requests_.fetch_add(1);
    fail.attempt_count = attempt + 1;

    const HttpResponse res = http.post_json(api_path_, body);
    fail.last_http_status = res.status;
    bool retryable = true;
    if (res.status == 0) {
      fail.reason = "transport: " + res.transport_error;
    } else {
      any_response_ = true;
      only_transport_errors = false;
      if (!res.ok()) {
        fail.reason = "http " + std::to_string(res.status);
        retryable = is_retryable_status(res.status);
      } else {
        try {
          const json j = json::parse(res.body);
          const json& choice = j.at("choices").at(0);
          RewriteOutput out;
          out.doc_id = doc.id;
          out.raw_completion = choice.at("message").at("content").get<std::string>();
          const auto fr = choice.find("finish_reason");
          out.finish_reason = (fr != choice.end() && fr->is_string())
                                  ? finish_reason_from_string(fr->get<std::string>())
                                  : FinishReason::kStop;
          TaggedSpans spans = parse_tagged(out.raw_completion);
          out.thinking = std::move(spans.thinking);
          out.improved = std::move(spans.improved);
          out.attempt_count = attempt + 1;
          return Success{std::move(out), prompt.truncated};
        } catch (const Error& e) {
          fail.reason = std::string(to_string(e.code()));
        } catch (const json::exception& e) {
          fail.reason = std::string("bad response: ") + e.what();
        }
      }
    }
    if (!retryable) break;
    if (attempt < cfg_.retry_limit) std::this_thread::sleep_for(backoff.delay(attempt));
  }
  if (only_transport_errors && !any_response_) {
    unreachable_ = true;
    fail.reason = "EndpointUnreachable: " + fail.reason;
  }
  return fail;
}

void RewriteRun::worker(std::size_t worker_index) {
  std::unique_ptr<HttpTransport> http = transport_();
  Backoff backoff(std::chrono::milliseconds(cfg_.retry_base_ms), std::chrono::milliseconds(cfg_.retry_cap_ms),
                  opts_.jitter_seed + worker_index);
  for (std::size_t k = next_pending_++; k < pending_.size(); k = next_pending_++) {
    const std::size_t index = pending_[k];
    Outcome outcome = (budget_hit_ || unreachable_) ? Outcome{Abandoned{}}
                                                    : process(*http, docs_[index], backoff);
    {
      std::lock_guard lock(mu_);
      if (const auto* s = std::get_if<Success>(&outcome)) {
        completions_->append(completion_entry(*s));
        ledger_->append(ledger_entry(s->output.doc_id, "ok", s->output.attempt_count));
      } else if (const auto* f = std::get_if<FailureRecord>(&outcome)) {
        ledger_->append(ledger_entry(f->doc_id, "failed", f->attempt_count, f->reason));
      }
      slots_[index] = std::move(outcome);
    }
    ready_.notify_all();
  }
}

RewriteSummary RewriteRun::run() {
  cfg_.validate();
  const fs::path& dir = opts_.out_dir;
  fs::create_directories(dir);
  docs_ = load_documents(manifest_);
  slots_.resize(docs_.size());

  // Earlier completions, when resuming.
  std::unordered_map<std::string, Success> done;
  if (opts_.resume) {
    std::unordered_map<std::string, std::string> last_status;
    for (const json& j : read_jsonl_tolerant(dir / kRunLedgerFile)) {
      last_status[j.value("doc_id", "")] = j.value("status", "");
    }
    for (const json& j : read_jsonl_tolerant(dir / kCompletionsFile)) {
      try {
        Success s{rewrite_output_from_json(j), j.value("input_truncated", false)};
        if (last_status[s.output.doc_id] == "ok") done[s.output.doc_id] = std::move(s);
      } catch (const json::exception&) {
      }
    }
  }
  ledger_ = std::make_unique<AppendLog>(dir / kRunLedgerFile, !opts_.resume);
  completions_ = std::make_unique<AppendLog>(dir / kCompletionsFile, !opts_.resume);

  RewriteSummary summary;
  for (std::size_t i = 0; i < docs_.size(); ++i) {
    if (auto it = done.find(docs_[i].id); it != done.end()) {
      slots_[i] = Outcome{it->second};
      ++summary.resumed;
    } else {
      pending_.push_back(i);
    }
  }

  std::vector<std::jthread> pool;
  const std::size_t workers = std::min<std::size_t>(cfg_.max_concurrency, std::max<std::size_t>(pending_.size(), 1));
  for (std::size_t w = 0; w < workers && !pending_.empty(); ++w) {
    pool.emplace_back([this, w] { worker(w); });
  }

  // Single writer: drains the reorder buffer in input order.
  CorpusWriter writer(dir, manifest_.corpus_name + "-rewritten", manifest_.tokenizer_id, opts_.shards);
  std::vector<json> canonical_ledger;
  std::vector<json> canonical_completions;
  std::vector<FailureRecord> failures;
  bool abandoned = false;
  for (std::size_t i = 0; i < docs_.size(); ++i) {
    Outcome outcome;
    {
      std::unique_lock lock(mu_);
      ready_.wait(lock, [&] { return slots_[i].has_value(); });
      outcome = std::move(*slots_[i]);
    }
    if (auto* s = std::get_if<Success>(&outcome)) {
      writer.add(make_rewritten_document(docs_[i], s->output, *tokenizer_, s->truncated));
      canonical_ledger.push_back(ledger_entry(docs_[i].id, "ok", s->output.attempt_count));
      canonical_completions.push_back(completion_entry(*s));
      ++summary.rewritten;
    } else if (auto* f = std::get_if<FailureRecord>(&outcome)) {
      canonical_ledger.push_back(ledger_entry(f->doc_id, "failed", f->attempt_count, f->reason));
      failures.push_back(std::move(*f));
      ++summary.failed;
    } else {
      abandoned = true;
    }
  }
  pool.clear();
  summary.requests = requests_.load();
  if (cfg_.max_requests != 0) summary.requests = std::min(summary.requests, cfg_.max_requests);

  if (unreachable_) {
    throw Error(ErrorCode::kEndpointUnreachable, "no response from " + cfg_.endpoint_url);
  }
  if (abandoned || budget_hit_) {
    throw Error(ErrorCode::kBudgetExceeded,
                "request cap of " + std::to_string(cfg_.max_requests) + " reached; rerun with resume");
  }

  // Compact the logs into input order so finished runs are reproducible
  // byte-for-byte regardless of completion order.
  ledger_.reset();
  completions_.reset();
  auto write_lines = [&](const fs::path& path, const std::vector<json>& lines) {
    std::string content;
    for (const json& j : lines) content += j.dump() + "\n";
    atomic_write_file(path, content);
  };
  write_lines(dir / kRunLedgerFile, canonical_ledger);
  write_lines(dir / kCompletionsFile, canonical_completions);
  std::vector<json> failure_lines;
  for (const auto& f : failures) failure_lines.push_back(failure_entry(f));
  write_lines(dir / kFailuresFile, failure_lines);

  summary.manifest = writer.finish(opts_.provenance);
  return summary;
}

}  // namespace

RewriteSummary rewrite_corpus(const CorpusManifest& manifest, const GenerationConfig& cfg,
                              const RewriteOptions& options, TransportFactory transport) {
  RewriteRun run(manifest, cfg, options, std::move(transport));
  return run.run();
}

}  // namespace recycle
