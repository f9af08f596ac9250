#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "recycle/corpus.hpp"
#include "recycle/document.hpp"

namespace recycle {

enum class FilterRule { kMinLength, kMaxLength, kDupLineFraction, kRepNgramFraction, kUrlBlocklist };

std::string_view to_string(FilterRule rule) noexcept;

struct FilterVerdict {
  std::string doc_id;
  bool passed = true;
  std::optional<FilterRule> failed_rule;
  std::optional<double> measured_value;

  bool operator==(const FilterVerdict&) const = default;
};

struct FilterConfig {
  std::uint64_t min_tokens = 50;
  std::uint64_t max_tokens = 100000;
  double max_dup_line_fraction = 0.30;
  double max_rep_ngram_fraction = 0.18;
  int rep_ngram_n = 3;
  std::set<std::string> url_blocklist;

  // Throws kConfigInvalid.
  void validate() const;
};

nlohmann::json to_json(const FilterConfig& cfg);
FilterConfig filter_config_from_json(const nlohmann::json& j);

// Share of non-empty lines equal to some earlier line. 0 for <= 1 line.
double dup_line_fraction(std::string_view text);

// Share of token positions covered by the most frequent token n-gram
// (whitespace tokens; overlapping occurrences count each position once).
// 0 when there are fewer than n tokens.
double rep_ngram_fraction(std::string_view text, int n);

// Lowercased host of an URL, or empty when none can be extracted.
std::string url_host(std::string_view url);
// True when the URL's host equals a blocked domain or is a subdomain of one.
bool url_blocked(std::string_view url, const std::set<std::string>& blocklist);

// Rules in fixed order; the first violation is reported.
FilterVerdict evaluate(const Document& doc, const FilterConfig& cfg);
// Diagnostic variant: one verdict per violated rule (empty when passing).
std::vector<FilterVerdict> evaluate_all(const Document& doc, const FilterConfig& cfg);

nlohmann::json to_json(const FilterVerdict& v);

struct FilterRunResult {
  CorpusManifest passed;
  std::uint64_t rejected = 0;
  std::vector<std::uint64_t> rejected_by_rule;  // indexed by FilterRule
};

// Applies the filter to every document, writing passing documents under
// `out_dir`. If `audit_path` is set, one verdict per document is written
// there as JSONL.
FilterRunResult filter_corpus(const CorpusManifest& manifest, const FilterConfig& cfg,
                              const fs::path& out_dir,
                              const std::optional<fs::path>& audit_path = std::nullopt,
                              ShardOptions options = {});

}  // namespace recycle
