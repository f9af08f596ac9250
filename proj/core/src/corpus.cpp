#include "recycle/corpus.hpp"

#include <glob.h>
#include <zlib.h>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "recycle/error.hpp"
#include "recycle/hash.hpp"
#include "recycle/text.hpp"
#include "recycle/tokenizer.hpp"

namespace recycle {

using nlohmann::json;

// ---- line IO ---------------------------------------------------------------

bool has_gzip_magic(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
  unsigned char magic[2] = {0, 0};
  in.read(reinterpret_cast<char*>(magic), 2);
  return in.gcount() == 2 && magic[0] == 0x1F && magic[1] == 0x8B;
}

struct LineReader::Impl {
  gzFile file = nullptr;
  std::string path;
};

LineReader::LineReader(const fs::path& path) : impl_(std::make_unique<Impl>()) {
  impl_->path = path.string();
  compressed_ = has_gzip_magic(path);
  // gzread passes non-gzip input through unchanged.
  impl_->file = gzopen(impl_->path.c_str(), "rb");
  if (impl_->file == nullptr) throw Error(ErrorCode::kIoFailure, "cannot open " + impl_->path);
  gzbuffer(impl_->file, 1 << 17);
}

LineReader::~LineReader() {
  if (impl_->file != nullptr) gzclose(impl_->file);
}

bool LineReader::next(std::string& line) {
  line.clear();
  char buf[1 << 14];
  bool any = false;
  while (gzgets(impl_->file, buf, sizeof(buf)) != nullptr) {
    any = true;
    line.append(buf);
    if (!line.empty() && line.back() == '\n') {
      line.pop_back();
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return true;
    }
  }
  int err = Z_OK;
  const char* msg = gzerror(impl_->file, &err);
  if (err != Z_OK && err != Z_STREAM_END) {
    throw Error(ErrorCode::kIoFailure, impl_->path + ": " + (msg ? msg : "read error"));
  }
  return any;
}

struct LineWriter::Impl {
  fs::path path;
  fs::path tmp;
  bool gz = false;
  gzFile gzf = nullptr;
  std::FILE* plain = nullptr;
  bool committed = false;

  void close() {
    if (gzf != nullptr) {
      const int rc = gzclose(gzf);
      gzf = nullptr;
      if (rc != Z_OK) throw Error(ErrorCode::kIoFailure, "gzip close failed: " + tmp.string());
    }
    if (plain != nullptr) {
      const int rc = std::fclose(plain);
      plain = nullptr;
      if (rc != 0) throw Error(ErrorCode::kIoFailure, "close failed: " + tmp.string());
    }
  }
};

LineWriter::LineWriter(fs::path path) : impl_(std::make_unique<Impl>()) {
  impl_->path = std::move(path);
  impl_->tmp = impl_->path;
  impl_->tmp += ".tmp";
  impl_->gz = impl_->path.extension() == ".gz";
  if (impl_->path.has_parent_path()) fs::create_directories(impl_->path.parent_path());
  if (impl_->gz) {
    impl_->gzf = gzopen(impl_->tmp.c_str(), "wb6");
    if (impl_->gzf == nullptr) throw Error(ErrorCode::kIoFailure, "cannot write " + impl_->tmp.string());
  } else {
    impl_->plain = std::fopen(impl_->tmp.c_str(), "wb");
    if (impl_->plain == nullptr) throw Error(ErrorCode::kIoFailure, "cannot write " + impl_->tmp.string());
  }
}

LineWriter::~LineWriter() {
  if (!impl_->committed) {
    try {
      impl_->close();
    } catch (...) {
    }
    std::error_code ec;
    fs::remove(impl_->tmp, ec);
  }
}

void LineWriter::write_line(std::string_view line) {
  if (impl_->gz) {
    if (!line.empty() &&
        gzwrite(impl_->gzf, line.data(), static_cast<unsigned>(line.size())) == 0) {
      throw Error(ErrorCode::kIoFailure, "gzip write failed: " + impl_->tmp.string());
    }
    if (gzputc(impl_->gzf, '\n') == -1) throw Error(ErrorCode::kIoFailure, "gzip write failed");
  } else {
    if (std::fwrite(line.data(), 1, line.size(), impl_->plain) != line.size() ||
        std::fputc('\n', impl_->plain) == EOF) {
      throw Error(ErrorCode::kIoFailure, "write failed: " + impl_->tmp.string());
    }
  }
}

void LineWriter::commit() {
  impl_->close();
  std::error_code ec;
  fs::rename(impl_->tmp, impl_->path, ec);
  if (ec) throw Error(ErrorCode::kIoFailure, "rename failed: " + impl_->path.string());
  impl_->committed = true;
}

void atomic_write_file(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoFailure, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(ErrorCode::kIoFailure, "write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::kIoFailure, "rename failed: " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<fs::path> expand_glob(const std::string& pattern) {
  std::vector<fs::path> out;
  if (pattern.find_first_of("*?[") == std::string::npos) {
    if (fs::is_regular_file(pattern)) out.emplace_back(pattern);
    return out;
  }
  glob_t g{};
  const int rc = ::glob(pattern.c_str(), 0, nullptr, &g);
  if (rc == 0) {
    for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
  }
  globfree(&g);
  std::sort(out.begin(), out.end());
  return out;
}

// ---- corpora ---------------------------------------------------------------

CorpusWriter::CorpusWriter(fs::path out_dir, std::string corpus_name, std::string tokenizer_id,
                           ShardOptions options)
    : out_dir_(std::move(out_dir)), options_(options) {
  if (options_.docs_per_shard == 0) options_.docs_per_shard = 1;
  manifest_.corpus_name = std::move(corpus_name);
  manifest_.tokenizer_id = std::move(tokenizer_id);
  manifest_.root = out_dir_;
  fs::create_directories(out_dir_);
}

CorpusWriter::~CorpusWriter() = default;

void CorpusWriter::roll() {
  if (current_) current_->commit();
  std::ostringstream name;
  name << "shard-" << std::setw(5) << std::setfill('0') << manifest_.shard_paths.size() << ".jsonl";
  if (options_.compress) name << ".gz";
  manifest_.shard_paths.push_back(name.str());
  current_ = std::make_unique<LineWriter>(out_dir_ / name.str());
  in_current_ = 0;
}

void CorpusWriter::add(const Document& doc) {
  if (!current_ || in_current_ >= options_.docs_per_shard) roll();
  current_->write_line(to_json(doc).dump());
  ++in_current_;
  ++manifest_.document_count;
  manifest_.total_tokens += doc.token_count;
}

CorpusManifest CorpusWriter::finish(std::optional<Provenance> provenance) {
  if (current_) {
    current_->commit();
    current_.reset();
  }
  manifest_.provenance = std::move(provenance);
  write_manifest(manifest_, out_dir_ / kManifestFile);
  return manifest_;
}

void write_manifest(const CorpusManifest& manifest, const fs::path& path) {
  atomic_write_file(path, to_json(manifest).dump(2) + "\n");
}

CorpusManifest read_manifest(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kIoFailure, path.string() + ": " + e.what());
  }
  return manifest_from_json(j, path.parent_path());
}

CorpusManifest open_corpus(const fs::path& path_or_dir) {
  if (fs::is_directory(path_or_dir)) return read_manifest(path_or_dir / kManifestFile);
  return read_manifest(path_or_dir);
}

void for_each_document(const CorpusManifest& manifest, const std::function<void(Document&&)>& fn) {
  std::string line;
  for (std::size_t i = 0; i < manifest.shard_paths.size(); ++i) {
    const fs::path path = manifest.shard_path(i);
    LineReader reader(path);
    std::uint64_t line_no = 0;
    while (reader.next(line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      try {
        fn(document_from_json(json::parse(line)));
      } catch (const json::exception& e) {
        throw Error(ErrorCode::kIoFailure,
                    path.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
  }
}

std::vector<Document> load_documents(const CorpusManifest& manifest) {
  std::vector<Document> docs;
  docs.reserve(manifest.document_count);
  for_each_document(manifest, [&](Document&& d) { docs.push_back(std::move(d)); });
  return docs;
}

// ---- ingest ----------------------------------------------------------------

namespace {

struct ParsedFile {
  std::vector<Document> docs;
  std::uint64_t skipped = 0;
  std::vector<std::string> reasons;
  std::string io_error;
};

ParsedFile parse_file(const fs::path& path, const IngestOptions& options, const Tokenizer& tok) {
  ParsedFile out;
  try {
    LineReader reader(path);
    std::string line;
    std::uint64_t line_no = 0;
    while (reader.next(line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      try {
        json record = json::parse(line);
        Document doc = document_from_json(record, options.id_field);
        doc.source_tag = SourceTag::kRaw;
        if (auto tag = record.find("source_tag"); tag != record.end() && tag->is_string()) {
          doc.source_tag = source_tag_from_string(tag->get<std::string>());
        }
        doc.token_count = tok.count(doc.text);
        out.docs.push_back(std::move(doc));
      } catch (const std::exception& e) {
        ++out.skipped;
        if (out.reasons.size() < 8) {
          out.reasons.push_back(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
      }
    }
  } catch (const std::exception& e) {
    out.io_error = e.what();
  }
  return out;
}

}  // namespace

IngestResult ingest(const std::vector<fs::path>& input_paths, const fs::path& out_dir,
                    const IngestOptions& options) {
  std::shared_ptr<const Tokenizer> tok = get_tokenizer(options.tokenizer_id);
  std::vector<fs::path> paths = input_paths;
  std::sort(paths.begin(), paths.end());
  paths.erase(std::unique(paths.begin(), paths.end()), paths.end());
  for (const auto& p : paths) {
    if (!fs::is_regular_file(p)) throw Error(ErrorCode::kIoFailure, "no such input file " + p.string());
  }

  std::vector<ParsedFile> parsed(paths.size());
  std::size_t workers = options.max_workers != 0 ? options.max_workers
                                                 : std::max(1U, std::thread::hardware_concurrency());
  workers = std::min(workers, std::max<std::size_t>(paths.size(), 1));
  std::atomic<std::size_t> next{0};
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < paths.size(); i = next++) {
          parsed[i] = parse_file(paths[i], options, *tok);
        }
      });
    }
  }

  IngestResult result;
  std::unordered_set<std::string> seen_ids;
  CorpusWriter writer(out_dir, options.corpus_name, options.tokenizer_id, options.shards);
  for (std::size_t i = 0; i < paths.size(); ++i) {
    ParsedFile& pf = parsed[i];
    if (!pf.io_error.empty()) throw Error(ErrorCode::kIoFailure, pf.io_error);
    result.skipped_records += pf.skipped;
    for (auto& r : pf.reasons) {
      if (result.skip_reasons.size() < 16) result.skip_reasons.push_back(std::move(r));
    }
    for (Document& doc : pf.docs) {
      if (!doc.id.empty()) {
        if (!seen_ids.insert(doc.id).second) {
          ++result.skipped_records;
          if (result.skip_reasons.size() < 16) {
            result.skip_reasons.push_back(paths[i].string() + ": duplicate id '" + doc.id + "'");
          }
          continue;
        }
      } else {
        // Identical texts share a hash; later copies get a counter suffix.
        const std::string base = to_hex64(fnv1a64(doc.text));
        std::string id = base;
        for (std::uint64_t n = 1; seen_ids.contains(id); ++n) id = base + "-" + std::to_string(n);
        seen_ids.insert(id);
        doc.id = std::move(id);
      }
      writer.add(doc);
    }
  }
  result.manifest = writer.finish();
  if (result.manifest.document_count == 0) {
    throw Error(ErrorCode::kEmptyCorpus, "no valid documents in " + std::to_string(paths.size()) +
                                             " input file(s)");
  }
  return result;
}

std::uint64_t dedup_key(std::string_view text) { return fnv1a64(normalize_for_dedup(text)); }

DedupResult deduplicate(const CorpusManifest& manifest, const fs::path& out_dir, ShardOptions options) {
  DedupResult result;
  std::unordered_set<std::uint64_t> seen;
  CorpusWriter writer(out_dir, manifest.corpus_name, manifest.tokenizer_id, options);
  for_each_document(manifest, [&](Document&& doc) {
    if (seen.insert(dedup_key(doc.text)).second) {
      writer.add(doc);
    } else {
      ++result.removed;
    }
  });
  result.manifest = writer.finish(manifest.provenance);
  return result;
}

CorpusManifest write_subset(const CorpusManifest& manifest,
                            const std::function<bool(const Document&)>& keep,
                            const fs::path& out_dir, const std::string& corpus_name,
                            ShardOptions options) {
  CorpusWriter writer(out_dir, corpus_name, manifest.tokenizer_id, options);
  for_each_document(manifest, [&](Document&& doc) {
    if (keep(doc)) writer.add(doc);
  });
  return writer.finish();
}

}  // namespace recycle
