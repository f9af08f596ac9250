#include "support.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <unistd.h>

#include "recycle/tokenizer.hpp"

namespace testing {

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          ("recycle-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

void write_text(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

void write_jsonl(const fs::path& path, const std::vector<nlohmann::json>& records) {
  std::string content;
  for (const auto& r : records) content += r.dump() + "\n";
  write_text(path, content);
}

recycle::Document make_doc(std::string id, std::string text) {
  recycle::Document d;
  d.id = std::move(id);
  d.token_count = recycle::count_tokens(text, "ws");
  d.text = std::move(text);
  return d;
}

recycle::CorpusManifest write_corpus(const fs::path& dir, const std::vector<recycle::Document>& docs,
                                     std::uint64_t docs_per_shard) {
  recycle::ShardOptions opts;
  opts.docs_per_shard = docs_per_shard;
  recycle::CorpusWriter writer(dir, dir.filename().string(), "ws", opts);
  for (const auto& d : docs) writer.add(d);
  return writer.finish();
}

std::string random_word(std::mt19937_64& rng, std::size_t vocab, const std::string& prefix) {
  return prefix + std::to_string(rng() % vocab);
}

std::string random_text(std::mt19937_64& rng, std::size_t words, std::size_t vocab, const std::string& prefix) {
  std::string out;
  for (std::size_t i = 0; i < words; ++i) {
    if (i) out += ' ';
    out += random_word(rng, vocab, prefix);
  }
  return out;
}

std::string random_lines(std::mt19937_64& rng, std::size_t lines, std::size_t words_per_line, std::size_t vocab,
                         const std::string& prefix) {
  std::string out;
  for (std::size_t l = 0; l < lines; ++l) {
    if (l) out += '\n';
    out += random_text(rng, words_per_line, vocab, prefix);
  }
  return out;
}

std::vector<std::string> ids_of(const std::vector<recycle::Document>& docs) {
  std::vector<std::string> ids;
  ids.reserve(docs.size());
  for (const auto& d : docs) ids.push_back(d.id);
  return ids;
}

std::vector<std::pair<std::string, std::string>> snapshot_tree(const fs::path& root) {
  std::vector<std::pair<std::string, std::string>> out;
  if (!fs::exists(root)) return out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    out.emplace_back(fs::relative(e.path(), root).string(), ss.str());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace testing
