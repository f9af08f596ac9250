#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "recycle/text.hpp"

namespace recycle {

// Token counting is relative to a tokenizer id. Built-ins:
//   "ws"                - Unicode whitespace word split
//   "subword:<path>"    - greedy longest-match over a vocabulary file
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;

  virtual const std::string& id() const noexcept = 0;
  virtual std::vector<TokenSpan> spans(std::string_view text) const = 0;
  virtual std::uint64_t count(std::string_view text) const { return spans(text).size(); }
};

class WhitespaceTokenizer final : public Tokenizer {
 public:
  WhitespaceTokenizer();
  const std::string& id() const noexcept override { return id_; }
  std::vector<TokenSpan> spans(std::string_view text) const override;
  std::uint64_t count(std::string_view text) const override;

 private:
  std::string id_;
};

// Vocabulary file: one token per line; anything after a tab is ignored.
// Each whitespace-delimited word is segmented left to right by taking the
// longest vocabulary entry that prefixes the remainder. When nothing
// matches, a single code point is emitted as its own token.
class SubwordTokenizer final : public Tokenizer {
 public:
  explicit SubwordTokenizer(const std::string& vocab_path);
  ~SubwordTokenizer() override;

  const std::string& id() const noexcept override { return id_; }
  std::vector<TokenSpan> spans(std::string_view text) const override;
  std::size_t vocab_size() const noexcept;

 private:
  struct Trie;
  std::string id_;
  std::unique_ptr<Trie> trie_;
};

// Registry lookup. Instances are cached per id; throws kUnknownTokenizer
// for ids that match no built-in (or a subword vocabulary that cannot be
// read).
std::shared_ptr<const Tokenizer> get_tokenizer(std::string_view tokenizer_id);

std::uint64_t count_tokens(std::string_view text, std::string_view tokenizer_id);

// Prefix of `text` holding at most `max_tokens` tokens. Returns the byte
// length of the prefix (through the end of the last kept token).
std::size_t token_prefix_length(const Tokenizer& tokenizer, std::string_view text,
                                std::uint64_t max_tokens, bool* truncated = nullptr);

}  // namespace recycle
