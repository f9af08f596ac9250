#include "recycle/tokenizer.hpp"

#include <fstream>
#include <map>
#include <mutex>
#include <unordered_map>

#include "recycle/error.hpp"

namespace recycle {

WhitespaceTokenizer::WhitespaceTokenizer() : id_("ws") {}

std::vector<TokenSpan> WhitespaceTokenizer::spans(std::string_view text) const {
  return whitespace_spans(text);
}

std::uint64_t WhitespaceTokenizer::count(std::string_view text) const {
  std::uint64_t n = 0;
  bool in_token = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    char32_t cp = 0;
    pos += decode_utf8(text, pos, cp);
    const bool ws = is_unicode_whitespace(cp);
    if (!ws && !in_token) ++n;
    in_token = !ws;
  }
  return n;
}

// Byte trie; edges keyed by (node << 8 | byte).
struct SubwordTokenizer::Trie {
  std::unordered_map<std::uint64_t, std::uint32_t> edges;
  std::vector<bool> terminal{false};
  std::size_t entries = 0;

  void insert(std::string_view token) {
    std::uint32_t node = 0;
    for (unsigned char c : token) {
      const std::uint64_t key = (static_cast<std::uint64_t>(node) << 8) | c;
      auto it = edges.find(key);
      if (it == edges.end()) {
        const auto next = static_cast<std::uint32_t>(terminal.size());
        terminal.push_back(false);
        it = edges.emplace(key, next).first;
      }
      node = it->second;
    }
    if (!terminal[node]) ++entries;
    terminal[node] = true;
  }

  // Length of the longest entry prefixing `word`, 0 when none.
  std::size_t longest_prefix(std::string_view word) const {
    std::uint32_t node = 0;
    std::size_t best = 0;
    for (std::size_t i = 0; i < word.size(); ++i) {
      const std::uint64_t key =
          (static_cast<std::uint64_t>(node) << 8) | static_cast<unsigned char>(word[i]);
      auto it = edges.find(key);
      if (it == edges.end()) break;
      node = it->second;
      if (terminal[node]) best = i + 1;
    }
    return best;
  }
};

SubwordTokenizer::SubwordTokenizer(const std::string& vocab_path)
    : id_("subword:" + vocab_path), trie_(std::make_unique<Trie>()) {
  std::ifstream in(vocab_path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kUnknownTokenizer, "cannot read vocabulary " + vocab_path);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::size_t tab = line.find('\t');
    if (tab != std::string::npos) line.resize(tab);
    if (!line.empty()) trie_->insert(line);
  }
  if (trie_->entries == 0) {
    throw Error(ErrorCode::kUnknownTokenizer, "empty vocabulary " + vocab_path);
  }
}

SubwordTokenizer::~SubwordTokenizer() = default;

std::size_t SubwordTokenizer::vocab_size() const noexcept { return trie_->entries; }

std::vector<TokenSpan> SubwordTokenizer::spans(std::string_view text) const {
  std::vector<TokenSpan> out;
  for (const TokenSpan& word : whitespace_spans(text)) {
    std::size_t pos = word.begin;
    while (pos < word.end) {
      std::size_t len = trie_->longest_prefix(text.substr(pos, word.end - pos));
      if (len == 0) {
        char32_t cp = 0;
        len = decode_utf8(text, pos, cp);
      }
      out.push_back({pos, pos + len});
      pos += len;
    }
  }
  return out;
}

std::shared_ptr<const Tokenizer> get_tokenizer(std::string_view tokenizer_id) {
  static std::mutex mu;
  static std::map<std::string, std::shared_ptr<const Tokenizer>, std::less<>> cache;
  std::lock_guard lock(mu);
  if (auto it = cache.find(tokenizer_id); it != cache.end()) return it->second;

  std::shared_ptr<const Tokenizer> tok;
  constexpr std::string_view kSubword = "subword:";
  if (tokenizer_id == "ws") {
    tok = std::make_shared<WhitespaceTokenizer>();
  } else if (tokenizer_id.starts_with(kSubword) && tokenizer_id.size() > kSubword.size()) {
    tok = std::make_shared<SubwordTokenizer>(std::string(tokenizer_id.substr(kSubword.size())));
  } else {
    throw Error(ErrorCode::kUnknownTokenizer, "unknown tokenizer '" + std::string(tokenizer_id) + "'");
  }
  cache.emplace(std::string(tokenizer_id), tok);
  return tok;
}

std::uint64_t count_tokens(std::string_view text, std::string_view tokenizer_id) {
  return get_tokenizer(tokenizer_id)->count(text);
}

std::size_t token_prefix_length(const Tokenizer& tokenizer, std::string_view text,
                                std::uint64_t max_tokens, bool* truncated) {
  const std::vector<TokenSpan> spans = tokenizer.spans(text);
  if (spans.size() <= max_tokens) {
    if (truncated) *truncated = false;
    return text.size();
  }
  if (truncated) *truncated = true;
  if (max_tokens == 0) return 0;
  return spans[max_tokens - 1].end;
}

}  // namespace recycle
