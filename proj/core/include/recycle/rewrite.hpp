#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include <nlohmann/json.hpp>

#include "recycle/corpus.hpp"
#include "recycle/document.hpp"
#include "recycle/http.hpp"
#include "recycle/tokenizer.hpp"

namespace recycle {

inline constexpr std::string_view kThinkingStart = "<thinking_starts>";
inline constexpr std::string_view kThinkingEnd = "<thinking_ends>";
inline constexpr std::string_view kImprovedStart = "<improved_response_starts>";
inline constexpr std::string_view kImprovedEnd = "<improved_response_ends>";

inline constexpr std::string_view kDraftPlaceholder = "[ORIGINAL DOCUMENT]";
inline constexpr std::string_view kPromptTemplateVersion = "guided-rewrite-v1";

// The guided-rewrite user message with the [ORIGINAL DOCUMENT] placeholder.
std::string_view prompt_template() noexcept;

struct GenerationConfig {
  std::string endpoint_url = "http://127.0.0.1:8000/v1";
  std::string model_name;
  double temperature = 1.0;
  double top_p = 0.9;
  std::uint32_t max_tokens = 8192;
  std::uint64_t max_input_tokens = 8192;
  std::uint32_t max_concurrency = 8;
  std::uint32_t retry_limit = 5;
  std::optional<std::int64_t> seed;

  std::uint32_t retry_base_ms = 1000;
  std::uint32_t retry_cap_ms = 60000;
  std::uint64_t max_requests = 0;  // 0: unlimited
  std::uint32_t read_timeout_s = 600;

  void validate() const;  // throws kConfigInvalid
};

nlohmann::json to_json(const GenerationConfig& cfg);
GenerationConfig generation_config_from_json(const nlohmann::json& j);

struct Prompt {
  std::string text;
  bool truncated = false;
  std::uint64_t kept_tokens = 0;
};

// Substitutes the (head-truncated) document text into the template.
// Throws kEmptyDocument when nothing remains to rewrite.
Prompt build_prompt(const Document& doc, const Tokenizer& tokenizer,
                    std::uint64_t max_input_tokens);

// Body of a chat-completions request with a single user message.
nlohmann::json chat_request_body(const std::string& prompt, const GenerationConfig& cfg);

struct TaggedSpans {
  std::string thinking;
  std::string improved;
  bool operator==(const TaggedSpans&) const = default;
};

// Content between the first opening tag and the first following closing tag
// of each pair, whitespace-stripped. Throws kMissingImprovedTags when the
// improved pair is absent or empty.
TaggedSpans parse_tagged(std::string_view raw_completion);

// Inverse of parse_tagged for tag-free inputs.
std::string compose_tagged(std::string_view thinking, std::string_view improved);

// Removes every occurrence of the four tag markers.
std::string scrub_tags(std::string_view text);
bool contains_tag_marker(std::string_view text) noexcept;

enum class FinishReason { kStop, kLength, kError };
std::string_view to_string(FinishReason r) noexcept;
FinishReason finish_reason_from_string(std::string_view s) noexcept;

struct RewriteOutput {
  std::string doc_id;
  std::string thinking;
  std::string improved;
  std::string raw_completion;
  FinishReason finish_reason = FinishReason::kError;
  std::uint32_t attempt_count = 0;
};

nlohmann::json to_json(const RewriteOutput& out);
RewriteOutput rewrite_output_from_json(const nlohmann::json& j);

struct FailureRecord {
  std::string doc_id;
  std::string reason;
  std::uint32_t attempt_count = 0;
  int last_http_status = 0;
};

struct RewriteOptions {
  std::filesystem::path out_dir;
  bool resume = false;
  ShardOptions shards;
  std::optional<Provenance> provenance;
  std::uint64_t jitter_seed = 0;
};

struct RewriteSummary {
  CorpusManifest manifest;
  std::uint64_t rewritten = 0;
  std::uint64_t failed = 0;
  std::uint64_t resumed = 0;   // completed by an earlier run and skipped
  std::uint64_t requests = 0;
};

// File names inside RewriteOptions::out_dir.
inline constexpr const char* kRunLedgerFile = "ledger.jsonl";
inline constexpr const char* kCompletionsFile = "completions.jsonl";
inline constexpr const char* kFailuresFile = "failures.jsonl";

// Rewrites every document through the endpoint with a bounded pool of
// in-flight requests. Outputs are written in input order whatever the
// completion order. Failures go to failures.jsonl and the run continues.
// With resume, ids recorded as completed in the run ledger are skipped.
// Throws kEndpointUnreachable when no request ever reaches the server and
// kBudgetExceeded when max_requests is hit (state is persisted first).
RewriteSummary rewrite_corpus(const CorpusManifest& manifest, const GenerationConfig& cfg,
                              const RewriteOptions& options,
                              TransportFactory transport = nullptr);

// The rewritten document for a successful output (tags scrubbed, token
// count recomputed, id preserved).
Document make_rewritten_document(const Document& source, const RewriteOutput& out,
                                 const Tokenizer& tokenizer, bool truncated);

}  // namespace recycle
