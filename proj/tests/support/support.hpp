#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "recycle/corpus.hpp"
#include "recycle/document.hpp"

namespace testing {

namespace fs = std::filesystem;

// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const noexcept { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

void write_text(const fs::path& path, const std::string& content);
void write_jsonl(const fs::path& path, const std::vector<nlohmann::json>& records);

// Documents with token_count from the whitespace tokenizer.
recycle::Document make_doc(std::string id, std::string text);
recycle::CorpusManifest write_corpus(const fs::path& dir, const std::vector<recycle::Document>& docs,
                                     std::uint64_t docs_per_shard = 100000);

std::string random_word(std::mt19937_64& rng, std::size_t vocab, const std::string& prefix = "w");
std::string random_text(std::mt19937_64& rng, std::size_t words, std::size_t vocab,
                        const std::string& prefix = "w");

// Lines of words, `lines` x `words_per_line`.
std::string random_lines(std::mt19937_64& rng, std::size_t lines, std::size_t words_per_line,
                         std::size_t vocab, const std::string& prefix = "w");

std::vector<std::string> ids_of(const std::vector<recycle::Document>& docs);

// Every regular file under root, keyed by relative path, with its bytes.
std::vector<std::pair<std::string, std::string>> snapshot_tree(const fs::path& root);

}  // namespace testing
