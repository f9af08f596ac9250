#include "recycle/heuristic_filter.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

#include "recycle/error.hpp"
#include "recycle/hash.hpp"
#include "recycle/text.hpp"

namespace recycle {

using nlohmann::json;

std::string_view to_string(FilterRule rule) noexcept {
  switch (rule) {
    case FilterRule::kMinLength: return "min_length";
    case FilterRule::kMaxLength: return "max_length";
    case FilterRule::kDupLineFraction: return "dup_line_fraction";
    case FilterRule::kRepNgramFraction: return "rep_ngram_fraction";
    case FilterRule::kUrlBlocklist: return "url_blocklist";
  }
  return "unknown";
}

void FilterConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kConfigInvalid, msg); };
  if (min_tokens > max_tokens) fail("min_tokens exceeds max_tokens");
  if (!(max_dup_line_fraction >= 0.0 && max_dup_line_fraction <= 1.0)) {
    fail("max_dup_line_fraction outside [0,1]");
  }
  if (!(max_rep_ngram_fraction >= 0.0 && max_rep_ngram_fraction <= 1.0)) {
    fail("max_rep_ngram_fraction outside [0,1]");
  }
  if (rep_ngram_n < 2) fail("rep_ngram_n must be at least 2");
}

json to_json(const FilterConfig& cfg) {
  return json{{"min_tokens", cfg.min_tokens},
              {"max_tokens", cfg.max_tokens},
              {"max_dup_line_fraction", cfg.max_dup_line_fraction},
              {"max_rep_ngram_fraction", cfg.max_rep_ngram_fraction},
              {"rep_ngram_n", cfg.rep_ngram_n},
              {"url_blocklist", cfg.url_blocklist}};
}

FilterConfig filter_config_from_json(const json& j) {
  FilterConfig cfg;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "min_tokens") cfg.min_tokens = value.get<std::uint64_t>();
      else if (key == "max_tokens") cfg.max_tokens = value.get<std::uint64_t>();
      else if (key == "max_dup_line_fraction") cfg.max_dup_line_fraction = value.get<double>();
      else if (key == "max_rep_ngram_fraction") cfg.max_rep_ngram_fraction = value.get<double>();
      else if (key == "rep_ngram_n") cfg.rep_ngram_n = value.get<int>();
      else if (key == "url_blocklist") {
        for (const auto& d : value) cfg.url_blocklist.insert(to_lower(d.get<std::string>()));
      } else {
        throw Error(ErrorCode::kConfigInvalid, "unknown filter key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfigInvalid, std::string("filter config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

double dup_line_fraction(std::string_view text) {
  std::unordered_set<std::string_view> seen;
  std::size_t total = 0;
  std::size_t dups = 0;
  for (std::string_view line : split_lines(text)) {
    line = trim(line);
    if (line.empty()) continue;
    ++total;
    if (!seen.insert(line).second) ++dups;
  }
  if (total <= 1) return 0.0;
  return static_cast<double>(dups) / static_cast<double>(total);
}

double rep_ngram_fraction(std::string_view text, int n) {
  if (n < 2) throw Error(ErrorCode::kInvalidArgument, "n-gram order must be at least 2");
  const std::vector<std::string_view> tokens = split_whitespace(text);
  const std::size_t un = static_cast<std::size_t>(n);
  if (tokens.size() < un) return 0.0;

  // Intern tokens, then key each n-gram by a hash of its token ids with an
  // exact comparison on collision.
  std::unordered_map<std::string_view, std::uint32_t> ids;
  std::vector<std::uint32_t> seq;
  seq.reserve(tokens.size());
  for (std::string_view t : tokens) {
    seq.push_back(ids.emplace(t, static_cast<std::uint32_t>(ids.size())).first->second);
  }
  struct Gram {
    std::size_t first_pos;
    std::size_t count = 0;
    std::size_t covered = 0;
    std::size_t last_end = 0;  // end of the last counted occurrence
  };
  auto same = [&](std::size_t a, std::size_t b) {
    return std::equal(seq.begin() + static_cast<std::ptrdiff_t>(a),
                      seq.begin() + static_cast<std::ptrdiff_t>(a + un),
                      seq.begin() + static_cast<std::ptrdiff_t>(b));
  };
  std::unordered_multimap<std::uint64_t, Gram> grams;
  for (std::size_t i = 0; i + un <= seq.size(); ++i) {
    Hasher h;
    for (std::size_t k = 0; k < un; ++k) h.add(static_cast<std::uint64_t>(seq[i + k]));
    auto [lo, hi] = grams.equal_range(h.value());
    Gram* g = nullptr;
    for (auto it = lo; it != hi; ++it) {
      if (same(it->second.first_pos, i)) {
        g = &it->second;
        break;
      }
    }
    if (g == nullptr) g = &grams.emplace(h.value(), Gram{i})->second;
    ++g->count;
    // Occurrences arrive in position order, so coverage grows by the part
    // of [i, i+n) not already covered.
    const std::size_t start = std::max(i, g->last_end);
    g->covered += i + un - start;
    g->last_end = i + un;
  }
  std::size_t best_count = 0;
  std::size_t best_cover = 0;
  for (const auto& [_, g] : grams) {
    if (g.count > best_count || (g.count == best_count && g.covered > best_cover)) {
      best_count = g.count;
      best_cover = g.covered;
    }
  }
  return static_cast<double>(best_cover) / static_cast<double>(seq.size());
}

std::string url_host(std::string_view url) {
  std::string_view rest = trim(url);
  if (auto scheme = rest.find("://"); scheme != std::string_view::npos) {
    rest.remove_prefix(scheme + 3);
  } else if (rest.starts_with("//")) {
    rest.remove_prefix(2);
  }
  const std::size_t end = rest.find_first_of("/?#");
  std::string_view authority = rest.substr(0, end);
  if (auto at = authority.rfind('@'); at != std::string_view::npos) authority.remove_prefix(at + 1);
  if (authority.starts_with('[')) return {};  // IPv6 literal: no registrable domain
  if (auto colon = authority.find(':'); colon != std::string_view::npos) authority = authority.substr(0, colon);
  while (authority.ends_with('.')) authority.remove_suffix(1);
  return to_lower(authority);
}

bool url_blocked(std::string_view url, const std::set<std::string>& blocklist) {
  const std::string host = url_host(url);
  if (host.empty()) return false;
  for (const std::string& raw : blocklist) {
    const std::string domain = to_lower(raw);
    if (domain.empty()) continue;
    if (host == domain) return true;
    if (host.size() > domain.size() && host.ends_with(domain) &&
        host[host.size() - domain.size() - 1] == '.') {
      return true;
    }
  }
  return false;
}

namespace {

// All rule outcomes in order; stops at the first failure unless `all`.
std::vector<FilterVerdict> run_rules(const Document& doc, const FilterConfig& cfg, bool all) {
  std::vector<FilterVerdict> failures;
  auto fail = [&](FilterRule rule, double value) {
    failures.push_back(FilterVerdict{doc.id, false, rule, value});
    return !all;
  };
  const auto tokens = static_cast<double>(doc.token_count);
  if (doc.token_count < cfg.min_tokens && fail(FilterRule::kMinLength, tokens)) return failures;
  if (doc.token_count > cfg.max_tokens && fail(FilterRule::kMaxLength, tokens)) return failures;
  if (const double d = dup_line_fraction(doc.text);
      d > cfg.max_dup_line_fraction && fail(FilterRule::kDupLineFraction, d)) {
    return failures;
  }
  if (const double r = rep_ngram_fraction(doc.text, cfg.rep_ngram_n);
      r > cfg.max_rep_ngram_fraction && fail(FilterRule::kRepNgramFraction, r)) {
    return failures;
  }
  if (doc.url && url_blocked(*doc.url, cfg.url_blocklist)) fail(FilterRule::kUrlBlocklist, 1.0);
  return failures;
}

}  // namespace

FilterVerdict evaluate(const Document& doc, const FilterConfig& cfg) {
  std::vector<FilterVerdict> failures = run_rules(doc, cfg, false);
  if (failures.empty()) return FilterVerdict{doc.id, true, std::nullopt, std::nullopt};
  return failures.front();
}

std::vector<FilterVerdict> evaluate_all(const Document& doc, const FilterConfig& cfg) {
  return run_rules(doc, cfg, true);
}

json to_json(const FilterVerdict& v) {
  json j{{"doc_id", v.doc_id}, {"passed", v.passed}};
  if (v.failed_rule) j["failed_rule"] = to_string(*v.failed_rule);
  if (v.measured_value) j["measured_value"] = *v.measured_value;
  return j;
}

FilterRunResult filter_corpus(const CorpusManifest& manifest, const FilterConfig& cfg,
                              const fs::path& out_dir, const std::optional<fs::path>& audit_path,
                              ShardOptions options) {
  cfg.validate();
  FilterRunResult result;
  result.rejected_by_rule.assign(5, 0);
  std::unique_ptr<LineWriter> audit;
  if (audit_path) audit = std::make_unique<LineWriter>(*audit_path);
  CorpusWriter writer(out_dir, manifest.corpus_name, manifest.tokenizer_id, options);
  for_each_document(manifest, [&](Document&& doc) {
    const FilterVerdict v = evaluate(doc, cfg);
    if (audit) audit->write_line(to_json(v).dump());
    if (v.passed) {
      writer.add(doc);
    } else {
      ++result.rejected;
      ++result.rejected_by_rule[static_cast<std::size_t>(*v.failed_rule)];
    }
  });
  result.passed = writer.finish(manifest.provenance);
  if (audit) audit->commit();
  return result;
}

}  // namespace recycle
