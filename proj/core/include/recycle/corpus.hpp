#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "recycle/document.hpp"

namespace recycle {

namespace fs = std::filesystem;

// Reads a newline-delimited file line by line. gzip input is detected by
// its magic bytes; anything else is read as plain text.
class LineReader {
 public:
  explicit LineReader(const fs::path& path);
  ~LineReader();
  LineReader(const LineReader&) = delete;
  LineReader& operator=(const LineReader&) = delete;

  bool next(std::string& line);
  bool compressed() const noexcept { return compressed_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  bool compressed_ = false;
};

bool has_gzip_magic(const fs::path& path);

// Writes to `<path>.tmp` and renames over `path` on commit(). gzip when the
// path ends in ".gz". Destroying an uncommitted writer removes the temp file.
class LineWriter {
 public:
  explicit LineWriter(fs::path path);
  ~LineWriter();
  LineWriter(const LineWriter&) = delete;
  LineWriter& operator=(const LineWriter&) = delete;

  void write_line(std::string_view line);
  void commit();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

void atomic_write_file(const fs::path& path, std::string_view content);
std::string read_file(const fs::path& path);

// Expands a shell glob; results sorted lexicographically. A pattern without
// wildcard characters is returned as-is when it names an existing file.
std::vector<fs::path> expand_glob(const std::string& pattern);

struct ShardOptions {
  std::uint64_t docs_per_shard = 100000;
  bool compress = false;
};

// Streams documents into rolling shards `shard-00000.jsonl[.gz]` under a
// directory and writes the manifest atomically on finish().
class CorpusWriter {
 public:
  CorpusWriter(fs::path out_dir, std::string corpus_name, std::string tokenizer_id,
               ShardOptions options = {});
  ~CorpusWriter();
  CorpusWriter(const CorpusWriter&) = delete;
  CorpusWriter& operator=(const CorpusWriter&) = delete;

  void add(const Document& doc);
  CorpusManifest finish(std::optional<Provenance> provenance = std::nullopt);

 private:
  void roll();

  fs::path out_dir_;
  CorpusManifest manifest_;
  ShardOptions options_;
  std::unique_ptr<LineWriter> current_;
  std::uint64_t in_current_ = 0;
};

inline constexpr const char* kManifestFile = "manifest.json";

void write_manifest(const CorpusManifest& manifest, const fs::path& path);
CorpusManifest read_manifest(const fs::path& path);
// Accepts either a manifest file or a directory containing manifest.json.
CorpusManifest open_corpus(const fs::path& path_or_dir);

void for_each_document(const CorpusManifest& manifest,
                       const std::function<void(Document&&)>& fn);
std::vector<Document> load_documents(const CorpusManifest& manifest);

struct IngestOptions {
  std::string tokenizer_id = "ws";
  std::string id_field = "id";
  std::string corpus_name = "corpus";
  ShardOptions shards;
  std::size_t max_workers = 0;  // 0: hardware concurrency
};

struct IngestResult {
  CorpusManifest manifest;
  std::uint64_t skipped_records = 0;
  std::vector<std::string> skip_reasons;  // first few, for reporting
};

// Parses every input (shard-parallel), assigns deterministic ids, counts
// tokens, and writes the corpus under `out_dir`. Malformed records are
// skipped and counted. Throws kEmptyCorpus when nothing valid remains.
IngestResult ingest(const std::vector<fs::path>& input_paths, const fs::path& out_dir,
                    const IngestOptions& options = {});

// Key used for exact deduplication: 64-bit hash of the normalized text.
std::uint64_t dedup_key(std::string_view text);

struct DedupResult {
  CorpusManifest manifest;
  std::uint64_t removed = 0;
};

// Keeps the first document (in shard order) of every group sharing a
// normalized-text hash.
DedupResult deduplicate(const CorpusManifest& manifest, const fs::path& out_dir,
                        ShardOptions options = {});

// Writes the documents of `manifest` whose ids are in `keep` (shard order
// preserved) as a new corpus.
CorpusManifest write_subset(const CorpusManifest& manifest,
                            const std::function<bool(const Document&)>& keep,
                            const fs::path& out_dir, const std::string& corpus_name,
                            ShardOptions options = {});

}  // namespace recycle
