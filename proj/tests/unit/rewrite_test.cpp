#include <doctest.h>

#include <atomic>
#include <chrono>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "mock/mock_endpoint.hpp"
#include "recycle/corpus.hpp"
#include "recycle/error.hpp"
#include "recycle/hash.hpp"
#include "recycle/rewrite.hpp"
#include "support.hpp"

using namespace recycle;
using nlohmann::json;
using testing::TempDir;

namespace {

// In-process transport: answers every request through the mock's
// completion logic, failing drafts that contain `fail_marker`.
class FakeTransport final : public HttpTransport {
 public:
  FakeTransport(const mock::MockEndpoint& m, std::string fail_marker, int fail_status,
                std::atomic<int>* calls)
      : mock_(m), marker_(std::move(fail_marker)), status_(fail_status), calls_(calls) {}

  HttpResponse post_json(const std::string& path, const std::string& body) override {
    ++*calls_;
    const json req = json::parse(body);
    const std::string prompt = req["messages"][0]["content"];
    const std::string draft(mock::extract_draft(prompt));
    if (!marker_.empty() && draft.find(marker_) != std::string::npos) return {status_, "{}", ""};
    if (path != "/v1/chat/completions") return {404, "", ""};
    json res{{"choices", json::array({json{{"index", 0},
                                           {"message", {{"role", "assistant"}, {"content", mock_.completion(draft)}}},
                                           {"finish_reason", "stop"}}})}};
    return {200, res.dump(), ""};
  }

 private:
  const mock::MockEndpoint& mock_;
  std::string marker_;
  int status_;
  std::atomic<int>* calls_;
};

std::vector<Document> numbered_docs(std::size_t n, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  std::vector<Document> docs;
  for (std::size_t i = 0; i < n; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "doc%03zu", i);
    docs.push_back(testing::make_doc(id, std::string("draft ") + id + " " + testing::random_text(rng, 20, 300)));
  }
  return docs;
}

GenerationConfig fast_config(const std::string& url) {
  GenerationConfig cfg;
  cfg.endpoint_url = url;
  cfg.model_name = "mock";
  cfg.retry_base_ms = 1;
  cfg.retry_cap_ms = 4;
  cfg.read_timeout_s = 10;
  return cfg;
}

std::set<std::string> ids_in(const fs::path& jsonl) {
  std::set<std::string> ids;
  LineReader r(jsonl);
  std::string line;
  while (r.next(line)) ids.insert(json::parse(line)["doc_id"].get<std::string>());
  return ids;
}

bool has_marker(const std::vector<Document>& docs) {
  for (const auto& d : docs) {
    if (contains_tag_marker(d.text)) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("prompt template is pinned") {
  const std::string_view t = prompt_template();
  CHECK(t.size() == 2682);
  CHECK(fnv1a64(t) == 0x99391d1f3f9a710aULL);
  CHECK(t.starts_with("Below is a draft from an AI Assistant"));
  CHECK(t.ends_with("Original Draft: [ORIGINAL DOCUMENT]"));
  CHECK(t.find(kDraftPlaceholder) == t.rfind(kDraftPlaceholder));
  CHECK(kPromptTemplateVersion == "guided-rewrite-v1");
}

TEST_CASE("build prompt") {
  const auto ws = get_tokenizer("ws");
  const Prompt p = build_prompt(testing::make_doc("h", "hello"), *ws, 8192);
  CHECK(p.text.find("Original Draft: hello") != std::string::npos);
  CHECK(p.text.ends_with("Original Draft: hello"));
  CHECK(p.text.find("[ORIGINAL DOCUMENT]") == std::string::npos);
  CHECK_FALSE(p.truncated);
  CHECK(p.kept_tokens == 1);

  try {
    build_prompt(testing::make_doc("e", "  \n"), *ws, 8192);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kEmptyDocument);
  }
}

TEST_CASE("long documents are head-truncated") {
  const auto ws = get_tokenizer("ws");
  std::string text;
  std::string first8000;
  const std::size_t n = 1'000'000;
  text.reserve(n * 7);
  for (std::size_t i = 0; i < n; ++i) {
    if (i) text += ' ';
    text += "t" + std::to_string(i);
    if (i + 1 == 8000) first8000 = text;
  }
  const Document doc = testing::make_doc("big", text);
  const Prompt p = build_prompt(doc, *ws, 8000);
  CHECK(p.truncated);
  CHECK(p.kept_tokens == 8000);
  const std::string_view tmpl = prompt_template();
  CHECK(p.text.size() == tmpl.size() - kDraftPlaceholder.size() + first8000.size());
  CHECK(p.text.ends_with("Original Draft: " + first8000));

  RewriteOutput out;
  out.doc_id = "big";
  out.improved = "better";
  out.finish_reason = FinishReason::kStop;
  const Document rewritten = make_rewritten_document(doc, out, *ws, p.truncated);
  CHECK(rewritten.metadata.at("input_truncated") == "true");
  CHECK(rewritten.source_tag == SourceTag::kRewritten);
  CHECK(rewritten.id == "big");
  CHECK(rewritten.token_count == 1);
}

TEST_CASE("parse tagged completions") {
  CHECK(parse_tagged("<thinking_starts>T<thinking_ends><improved_response_starts>R<improved_response_ends>") ==
        TaggedSpans{"T", "R"});
  CHECK(parse_tagged("preamble <improved_response_starts>\n R \n<improved_response_ends>") == TaggedSpans{"", "R"});
  CHECK(parse_tagged("<improved_response_starts>first<improved_response_ends>"
                     "<improved_response_starts>second<improved_response_ends>")
            .improved == "first");
  // Closing tag must follow the opening tag.
  CHECK(parse_tagged("<improved_response_ends><improved_response_starts>x<improved_response_ends>").improved == "x");

  for (const char* bad : {"no tags at all", "<improved_response_starts>unterminated",
                          "<improved_response_starts>  <improved_response_ends>",
                          "<thinking_starts>t<thinking_ends>"}) {
    try {
      parse_tagged(bad);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kMissingImprovedTags);
    }
  }
}

TEST_CASE("compose and parse round-trip") {
  std::mt19937_64 rng(4);
  const std::string alphabet = "ab <>_\n\tz";
  for (int i = 0; i < 2000; ++i) {
    auto gen = [&](std::size_t len) {
      std::string s;
      for (std::size_t k = 0; k < len; ++k) s += alphabet[rng() % alphabet.size()];
      return std::string(trim(s));
    };
    const std::string t = gen(rng() % 30);
    std::string r = gen(1 + rng() % 30);
    if (r.empty()) r = "x";
    if (contains_tag_marker(t) || contains_tag_marker(r)) continue;
    const std::string composed = compose_tagged(t, r);
    const TaggedSpans back = parse_tagged(composed);
    CHECK(back.thinking == t);
    CHECK(back.improved == r);
    CHECK(composed.find(back.improved) != std::string::npos);
  }
}

TEST_CASE("tag scrubbing") {
  CHECK(scrub_tags("a<thinking_starts>b<improved_response_ends>c") == "abc");
  CHECK(contains_tag_marker("x<thinking_ends>"));
  CHECK_FALSE(contains_tag_marker("<thinking>"));
}

TEST_CASE("request body") {
  GenerationConfig cfg;
  cfg.model_name = "m";
  json body = chat_request_body("P", cfg);
  CHECK(body["model"] == "m");
  CHECK(body["temperature"] == 1.0);
  CHECK(body["top_p"] == 0.9);
  CHECK(body["max_tokens"] == 8192);
  CHECK(body["messages"].size() == 1);
  CHECK(body["messages"][0]["role"] == "user");
  CHECK(body["messages"][0]["content"] == "P");
  CHECK_FALSE(body.contains("seed"));
  cfg.seed = 7;
  CHECK(chat_request_body("P", cfg)["seed"] == 7);
}

TEST_CASE("generation defaults and validation") {
  const GenerationConfig cfg;
  CHECK(cfg.temperature == 1.0);
  CHECK(cfg.top_p == 0.9);
  CHECK(cfg.max_tokens == 8192);
  CHECK(cfg.max_input_tokens == 8192);
  CHECK(cfg.retry_limit == 5);
  CHECK(cfg.retry_base_ms == 1000);
  CHECK(cfg.retry_cap_ms == 60000);

  auto invalid = [](auto mutate) {
    GenerationConfig c;
    mutate(c);
    try {
      c.validate();
    } catch (const Error& e) {
      return e.code() == ErrorCode::kConfigInvalid;
    }
    return false;
  };
  CHECK(invalid([](GenerationConfig& c) { c.temperature = -0.1; }));
  CHECK(invalid([](GenerationConfig& c) { c.top_p = 0.0; }));
  CHECK(invalid([](GenerationConfig& c) { c.top_p = 1.1; }));
  CHECK(invalid([](GenerationConfig& c) { c.max_tokens = 0; }));
  CHECK(invalid([](GenerationConfig& c) { c.max_concurrency = 0; }));

  GenerationConfig c;
  c.seed = 3;
  c.model_name = "x";
  const GenerationConfig back = generation_config_from_json(to_json(c));
  CHECK(back.seed == c.seed);
  CHECK(back.model_name == "x");
}

TEST_CASE("endpoint paths and backoff") {
  CHECK(HttpEndpoint::parse("http://h:1/v1").path_for("/v1/chat/completions") == "/v1/chat/completions");
  CHECK(HttpEndpoint::parse("http://h:1").path_for("/v1/chat/completions") == "/v1/chat/completions");
  CHECK(HttpEndpoint::parse("http://h:1/").path_for("/v1/embeddings") == "/v1/embeddings");
  CHECK(HttpEndpoint::parse("https://h/api/v1/").path_for("/v1/embeddings") == "/api/v1/embeddings");
  CHECK(HttpEndpoint::parse("http://h:1/v1").origin == "http://h:1");
  CHECK_THROWS_AS(HttpEndpoint::parse("h:1/v1"), Error);

  CHECK(is_retryable_status(0));
  CHECK(is_retryable_status(429));
  CHECK(is_retryable_status(503));
  CHECK_FALSE(is_retryable_status(400));
  CHECK_FALSE(is_retryable_status(404));

  Backoff b(std::chrono::milliseconds(1000), std::chrono::milliseconds(60000), 5);
  for (std::uint32_t attempt = 0; attempt < 12; ++attempt) {
    const auto bound = std::min<std::int64_t>(60000, 1000LL << attempt);
    for (int k = 0; k < 20; ++k) {
      const auto d = b.delay(attempt).count();
      CHECK(d >= 0);
      CHECK(d <= bound);
    }
  }
}

TEST_CASE("rewrite 100 documents against the mock server") {
  TempDir dir;
  mock::MockEndpoint server;
  server.start();
  const auto docs = numbered_docs(100);
  const auto m = testing::write_corpus(dir / "in", docs, 40);
  RewriteOptions opts;
  opts.out_dir = dir / "out";
  const RewriteSummary s = rewrite_corpus(m, fast_config(server.url()), opts);
  CHECK(s.rewritten == 100);
  CHECK(s.failed == 0);
  const auto out = load_documents(s.manifest);
  CHECK(testing::ids_of(out) == testing::ids_of(docs));
  CHECK_FALSE(has_marker(out));
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out[i].source_tag == SourceTag::kRewritten);
    CHECK(out[i].text == mock::MockEndpoint::improve(docs[i].text));
    CHECK(out[i].token_count == count_tokens(out[i].text, "ws"));
  }
  CHECK(server.requests() == 100);
  server.stop();
}

TEST_CASE("one always-failing document exhausts its retries") {
  TempDir dir;
  mock::MockEndpoint logic;
  std::atomic<int> calls{0};
  const auto docs = numbered_docs(100);
  const auto m = testing::write_corpus(dir / "in", docs);
  GenerationConfig cfg = fast_config("http://unused:1/v1");
  cfg.max_concurrency = 4;
  RewriteOptions opts;
  opts.out_dir = dir / "out";
  const RewriteSummary s = rewrite_corpus(m, cfg, opts, [&] {
    return std::make_unique<FakeTransport>(logic, "doc042 ", 500, &calls);
  });
  CHECK(s.rewritten == 99);
  CHECK(s.failed == 1);
  CHECK(calls == 99 + static_cast<int>(cfg.retry_limit) + 1);
  LineReader r(dir / "out" / kFailuresFile);
  std::string line;
  REQUIRE(r.next(line));
  const json f = json::parse(line);
  CHECK(f["doc_id"] == "doc042");
  CHECK(f["attempt_count"] == cfg.retry_limit + 1);
  CHECK(f["last_http_status"] == 500);
  CHECK_FALSE(r.next(line));
}

TEST_CASE("non-retryable statuses fail after one attempt") {
  TempDir dir;
  mock::MockEndpoint logic;
  std::atomic<int> calls{0};
  const auto m = testing::write_corpus(dir / "in", numbered_docs(5));
  RewriteOptions opts;
  opts.out_dir = dir / "out";
  const RewriteSummary s = rewrite_corpus(m, fast_config("http://unused:1/v1"), opts, [&] {
    return std::make_unique<FakeTransport>(logic, "doc003 ", 400, &calls);
  });
  CHECK(s.failed == 1);
  CHECK(calls == 5);
}

TEST_CASE("transient failures, then resume") {
  TempDir dir;
  mock::MockOptions mo;
  mo.seed = 11;
  mo.failure_rate = 0.05;
  mo.fail_attempts = 2;
  mock::MockEndpoint server(mo);
  server.start();
  const auto docs = numbered_docs(100);
  const auto m = testing::write_corpus(dir / "in", docs);
  GenerationConfig cfg = fast_config(server.url());
  cfg.retry_limit = 1;  // two attempts: both hit the injected 500s
  cfg.max_concurrency = 8;
  RewriteOptions opts;
  opts.out_dir = dir / "out";

  std::set<std::string> planted;
  for (const auto& d : docs) {
    if (server.selected_for_failure(d.text)) planted.insert(d.id);
  }
  REQUIRE_FALSE(planted.empty());

  const RewriteSummary first = rewrite_corpus(m, cfg, opts);
  const auto failed = ids_in(dir / "out" / kFailuresFile);
  const auto done = testing::ids_of(load_documents(first.manifest));
  CHECK(failed == planted);
  std::set<std::string> all(done.begin(), done.end());
  for (const auto& id : failed) CHECK(all.insert(id).second);  // disjoint
  CHECK(all.size() == docs.size());

  const std::uint64_t before = server.requests();
  opts.resume = true;
  const RewriteSummary second = rewrite_corpus(m, cfg, opts);
  CHECK(second.resumed == docs.size() - planted.size());
  CHECK(second.rewritten == docs.size());
  CHECK(second.failed == 0);
  CHECK(server.requests() - before == planted.size());
  CHECK(testing::ids_of(load_documents(second.manifest)) == testing::ids_of(docs));
  CHECK(ids_in(dir / "out" / kFailuresFile).empty());
  server.stop();
}

TEST_CASE("output does not depend on concurrency") {
  TempDir dir;
  mock::MockEndpoint server;
  server.start();
  const auto m = testing::write_corpus(dir / "in", numbered_docs(60));
  std::vector<std::vector<std::pair<std::string, std::string>>> trees;
  for (std::uint32_t c : {1U, 4U, 16U}) {
    GenerationConfig cfg = fast_config(server.url());
    cfg.max_concurrency = c;
    RewriteOptions opts;
    opts.out_dir = dir / ("out" + std::to_string(c));
    rewrite_corpus(m, cfg, opts);
    trees.push_back(testing::snapshot_tree(opts.out_dir));
  }
  CHECK(trees[0] == trees[1]);
  CHECK(trees[0] == trees[2]);
  server.stop();
}

TEST_CASE("unreachable endpoint") {
  TempDir dir;
  const auto m = testing::write_corpus(dir / "in", numbered_docs(3));
  GenerationConfig cfg = fast_config("http://127.0.0.1:1/v1");
  cfg.retry_limit = 1;
  RewriteOptions opts;
  opts.out_dir = dir / "out";
  try {
    rewrite_corpus(m, cfg, opts);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kEndpointUnreachable);
  }
}

TEST_CASE("request cap persists progress and resume finishes") {
  TempDir dir;
  mock::MockEndpoint logic;
  std::atomic<int> calls{0};
  const auto docs = numbered_docs(30);
  const auto m = testing::write_corpus(dir / "in", docs);
  GenerationConfig cfg = fast_config("http://unused:1/v1");
  cfg.max_requests = 10;
  cfg.max_concurrency = 1;
  RewriteOptions opts;
  opts.out_dir = dir / "out";
  auto factory = [&] { return std::make_unique<FakeTransport>(logic, "", 500, &calls); };
  try {
    rewrite_corpus(m, cfg, opts, factory);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kBudgetExceeded);
  }
  CHECK(calls == 10);
  cfg.max_requests = 0;
  opts.resume = true;
  const RewriteSummary s = rewrite_corpus(m, cfg, opts, factory);
  CHECK(s.resumed == 10);
  CHECK(s.rewritten == 30);
  CHECK(calls == 30);
  CHECK(testing::ids_of(load_documents(s.manifest)) == testing::ids_of(docs));
}

TEST_CASE("rewrite output json") {
  RewriteOutput o;
  o.doc_id = "a";
  o.thinking = "t";
  o.improved = "r";
  o.raw_completion = compose_tagged("t", "r");
  o.finish_reason = FinishReason::kLength;
  o.attempt_count = 3;
  const RewriteOutput back = rewrite_output_from_json(to_json(o));
  CHECK(back.doc_id == "a");
  CHECK(back.improved == "r");
  CHECK(back.finish_reason == FinishReason::kLength);
  CHECK(back.attempt_count == 3);
  CHECK(finish_reason_from_string("bogus") == FinishReason::kError);
}
