#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <zlib.h>

#include "recycle/corpus.hpp"
#include "recycle/error.hpp"
#include "recycle/hash.hpp"
#include "recycle/text.hpp"
#include "recycle/tokenizer.hpp"
#include "support.hpp"

using namespace recycle;
using nlohmann::json;
using testing::TempDir;

namespace {

using DocKey = std::tuple<std::string, std::string, std::uint64_t>;

std::multiset<DocKey> doc_multiset(const CorpusManifest& m) {
  std::multiset<DocKey> out;
  for (const auto& d : load_documents(m)) out.emplace(d.id, d.text, d.token_count);
  return out;
}

// ASCII-only stand-in for the dedup normalization: lowercase, collapse
// whitespace runs, trim.
std::string ascii_normalize(const std::string& s) {
  std::string out;
  bool pending_space = false;
  for (char c : s) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c));
  }
  return out;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected recycle::Error");
  return ErrorCode::kInvalidArgument;
}

}  // namespace

TEST_CASE("ingest skips malformed records") {
  TempDir dir;
  testing::write_text(dir / "in.jsonl",
                      "{\"id\":\"a\",\"text\":\"one two\"}\n"
                      "{\"id\":\"b\",\"text\":\"three\"}\n"
                      "{not json\n"
                      "{\"id\":\"c\",\"text\":\"four five six\"}\n");
  const IngestResult r = ingest({dir / "in.jsonl"}, dir / "out");
  CHECK(r.manifest.document_count == 3);
  CHECK(r.skipped_records == 1);
  CHECK(r.manifest.total_tokens == 6);
  CHECK(r.manifest.tokenizer_id == "ws");

  const CorpusManifest reopened = open_corpus(dir / "out");
  CHECK(reopened.document_count == 3);
  CHECK(reopened.shard_paths == r.manifest.shard_paths);
}

TEST_CASE("records without text, or with a wrongly typed field, are malformed") {
  TempDir dir;
  testing::write_text(dir / "in.jsonl",
                      "{\"id\":\"a\"}\n"
                      "{\"id\":\"b\",\"text\":7}\n"
                      "{\"id\":[1],\"text\":\"x\"}\n"
                      "{\"id\":\"d\",\"text\":\"ok\",\"url\":3}\n"
                      "[1,2]\n"
                      "{\"id\":\"e\",\"text\":\"ok\"}\n"
                      "{\"id\":\"e\",\"text\":\"again\"}\n");
  const IngestResult r = ingest({dir / "in.jsonl"}, dir / "out");
  CHECK(r.manifest.document_count == 1);
  CHECK(r.skipped_records == 6);
}

TEST_CASE("empty input is an empty corpus") {
  TempDir dir;
  testing::write_text(dir / "empty.jsonl", "");
  CHECK(code_of([&] { ingest({dir / "empty.jsonl"}, dir / "out"); }) == ErrorCode::kEmptyCorpus);
  CHECK(code_of([&] { ingest({dir / "missing.jsonl"}, dir / "out2"); }) == ErrorCode::kIoFailure);
}

TEST_CASE("ingest totals equal a single-threaded recount") {
  TempDir dir;
  std::mt19937_64 rng(5);
  std::vector<json> records;
  for (int i = 0; i < 10000; ++i) {
    const std::size_t words = rng() % 60;
    std::string text = testing::random_text(rng, words, 500);
    if (i % 7 == 0) text += "\n\tmore  words\xc2\xa0here";
    records.push_back({{"text", text}});
  }
  // Split across four files so the parallel path is exercised.
  for (int f = 0; f < 4; ++f) {
    std::vector<json> part(records.begin() + f * 2500, records.begin() + (f + 1) * 2500);
    testing::write_jsonl(dir / ("part-" + std::to_string(f) + ".jsonl"), part);
  }
  IngestOptions opts;
  opts.shards.docs_per_shard = 3000;
  opts.max_workers = 4;
  const IngestResult r = ingest(expand_glob((dir / "part-*.jsonl").string()), dir / "out", opts);

  std::uint64_t expected = 0;
  for (const auto& rec : records) {
    expected += split_whitespace(rec["text"].get<std::string>()).size();
  }
  CHECK(r.manifest.document_count == 10000);
  CHECK(r.manifest.total_tokens == expected);
  CHECK(r.manifest.shard_paths.size() == 4);
  CHECK(std::is_sorted(r.manifest.shard_paths.begin(), r.manifest.shard_paths.end()));

  std::uint64_t recount = 0;
  std::set<std::string> ids;
  for_each_document(r.manifest, [&](Document&& d) {
    CHECK(d.token_count == count_tokens(d.text, "ws"));
    recount += d.token_count;
    ids.insert(d.id);
  });
  CHECK(recount == expected);
  CHECK(ids.size() == 10000);
}

TEST_CASE("hashed ids and id field") {
  TempDir dir;
  testing::write_text(dir / "in.jsonl",
                      "{\"text\":\"same text\"}\n"
                      "{\"text\":\"same text\"}\n"
                      "{\"doc\":42,\"text\":\"numbered\"}\n");
  IngestOptions opts;
  opts.id_field = "doc";
  const IngestResult r = ingest({dir / "in.jsonl"}, dir / "out", opts);
  const auto docs = load_documents(r.manifest);
  REQUIRE(docs.size() == 3);
  const std::string hashed = to_hex64(fnv1a64("same text"));
  CHECK(docs[0].id == hashed);
  CHECK(docs[1].id == hashed + "-1");
  CHECK(docs[2].id == "42");
}

TEST_CASE("gzip input is detected by magic bytes") {
  TempDir dir;
  const std::string content = "{\"id\":\"z1\",\"text\":\"zipped words here\"}\n{\"id\":\"z2\",\"text\":\"more\"}\n";
  // Deliberately without a .gz suffix.
  const std::string path = (dir / "data.jsonl").string();
  gzFile gz = gzopen(path.c_str(), "wb");
  REQUIRE(gz != nullptr);
  gzwrite(gz, content.data(), static_cast<unsigned>(content.size()));
  gzclose(gz);

  CHECK(has_gzip_magic(path));
  LineReader reader(path);
  CHECK(reader.compressed());

  const IngestResult r = ingest({path}, dir / "out");
  CHECK(r.manifest.document_count == 2);
  CHECK(r.manifest.total_tokens == 4);
}

TEST_CASE("compressed shards round-trip") {
  TempDir dir;
  std::vector<Document> docs;
  std::mt19937_64 rng(9);
  for (int i = 0; i < 250; ++i) {
    Document d = testing::make_doc("d" + std::to_string(i), testing::random_text(rng, 1 + rng() % 30, 100));
    if (i % 3 == 0) d.url = "https://example.org/" + std::to_string(i);
    if (i % 5 == 0) d.metadata["lang"] = "en";
    docs.push_back(d);
  }
  ShardOptions opts;
  opts.docs_per_shard = 100;
  opts.compress = true;
  CorpusWriter writer(dir / "c", "c", "ws", opts);
  for (const auto& d : docs) writer.add(d);
  const CorpusManifest m = writer.finish();
  CHECK(m.shard_paths.size() == 3);
  CHECK(m.shard_paths[0] == "shard-00000.jsonl.gz");
  CHECK(has_gzip_magic(m.shard_path(0)));
  CHECK(load_documents(open_corpus(dir / "c")) == docs);

  // Re-ingesting the written shards reproduces the same documents.
  std::vector<fs::path> shards;
  for (std::size_t i = 0; i < m.shard_paths.size(); ++i) shards.push_back(m.shard_path(i));
  const IngestResult again = ingest(shards, dir / "again");
  CHECK(doc_multiset(again.manifest) == doc_multiset(m));
  CHECK(load_documents(again.manifest) == docs);
}

TEST_CASE("ingest is order-stable under record permutation") {
  TempDir dir;
  std::mt19937_64 rng(21);
  std::vector<json> records;
  for (int i = 0; i < 300; ++i) records.push_back({{"text", testing::random_text(rng, 1 + rng() % 20, 50)}});
  // Include repeated texts so hashed-id suffixes are exercised too.
  records.push_back(records[3]);
  records.push_back(records[3]);
  testing::write_jsonl(dir / "a.jsonl", records);
  std::vector<json> shuffled = records;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  testing::write_jsonl(dir / "b.jsonl", shuffled);

  const auto a = ingest({dir / "a.jsonl"}, dir / "oa").manifest;
  const auto b = ingest({dir / "b.jsonl"}, dir / "ob").manifest;
  CHECK(doc_multiset(a) == doc_multiset(b));
  CHECK(a.total_tokens == b.total_tokens);
}

TEST_CASE("deduplicate examples") {
  TempDir dir;
  SUBCASE("byte-identical") {
    const auto m = testing::write_corpus(dir / "c", {testing::make_doc("a", "same words"),
                                                     testing::make_doc("b", "same words")});
    const DedupResult r = deduplicate(m, dir / "d");
    CHECK(r.manifest.document_count == 1);
    CHECK(r.removed == 1);
    CHECK(load_documents(r.manifest)[0].id == "a");
  }
  SUBCASE("trailing whitespace and case") {
    const auto m = testing::write_corpus(dir / "c", {testing::make_doc("a", "Same words"),
                                                     testing::make_doc("b", "same   words \n\t")});
    CHECK(deduplicate(m, dir / "d").manifest.document_count == 1);
  }
  SUBCASE("different texts survive") {
    const auto m = testing::write_corpus(dir / "c", {testing::make_doc("a", "one"),
                                                     testing::make_doc("b", "two")});
    CHECK(deduplicate(m, dir / "d").manifest.document_count == 2);
  }
}

TEST_CASE("deduplicate matches a pairwise oracle") {
  TempDir dir;
  std::mt19937_64 rng(33);
  std::vector<Document> docs;
  for (int i = 0; i < 1000; ++i) {
    std::string text;
    if (i > 10 && rng() % 4 == 0) {
      // Plant a variant of an earlier document.
      text = docs[rng() % docs.size()].text;
      if (rng() % 2) text = "  " + text + " \n";
      if (rng() % 2) {
        for (auto& c : text) c = static_cast<char>(c >= 'a' && c <= 'z' ? c - 'a' + 'A' : c);
      }
    } else {
      text = testing::random_text(rng, 1 + rng() % 8, 6);
    }
    char id[16];
    std::snprintf(id, sizeof id, "d%04d", i);
    docs.push_back(testing::make_doc(id, text));
  }
  const auto m = testing::write_corpus(dir / "c", docs, 128);
  const DedupResult r = deduplicate(m, dir / "d");

  std::vector<std::string> expected;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    bool dup = false;
    for (std::size_t j = 0; j < i && !dup; ++j) {
      dup = ascii_normalize(docs[i].text) == ascii_normalize(docs[j].text);
    }
    if (!dup) expected.push_back(docs[i].id);
  }
  CHECK(testing::ids_of(load_documents(r.manifest)) == expected);
  CHECK(r.removed == docs.size() - expected.size());
  CHECK(r.manifest.total_tokens <= m.total_tokens);

  // Idempotent.
  const DedupResult twice = deduplicate(r.manifest, dir / "d2");
  CHECK(twice.removed == 0);
  CHECK(load_documents(twice.manifest) == load_documents(r.manifest));
  CHECK(twice.manifest.total_tokens == r.manifest.total_tokens);
}

TEST_CASE("manifest json and atomic writes") {
  TempDir dir;
  const auto m = testing::write_corpus(dir / "c", {testing::make_doc("a", "x y")});
  const json j = to_json(m);
  CHECK(j["corpus_name"] == "c");
  CHECK(j["document_count"] == 1);
  CHECK(j["total_tokens"] == 2);
  CHECK(j["tokenizer_id"] == "ws");
  CHECK(j["shard_paths"].size() == 1);
  CHECK_FALSE(fs::exists(dir / "c" / "manifest.json.tmp"));

  atomic_write_file(dir / "f.txt", "hello");
  CHECK(read_file(dir / "f.txt") == "hello");
  CHECK_FALSE(fs::exists(dir / "f.txt.tmp"));
}

TEST_CASE("uncommitted writers leave no file") {
  TempDir dir;
  {
    LineWriter w(dir / "x.jsonl");
    w.write_line("{}");
  }
  CHECK_FALSE(fs::exists(dir / "x.jsonl"));
  CHECK_FALSE(fs::exists(dir / "x.jsonl.tmp"));
}

TEST_CASE("subset keeps shard order") {
  TempDir dir;
  std::vector<Document> docs;
  for (int i = 0; i < 20; ++i) docs.push_back(testing::make_doc("d" + std::to_string(i), "w" + std::to_string(i)));
  const auto m = testing::write_corpus(dir / "c", docs, 6);
  const auto sub = write_subset(m, [](const Document& d) { return d.id.size() == 3; }, dir / "s", "s");
  CHECK(sub.document_count == 10);
  CHECK(load_documents(sub).front().id == "d10");
}

TEST_CASE("glob expansion is sorted") {
  TempDir dir;
  testing::write_text(dir / "b.jsonl", "");
  testing::write_text(dir / "a.jsonl", "");
  testing::write_text(dir / "c.txt", "");
  const auto paths = expand_glob((dir / "*.jsonl").string());
  REQUIRE(paths.size() == 2);
  CHECK(paths[0].filename() == "a.jsonl");
  CHECK(expand_glob((dir / "c.txt").string()).size() == 1);
  CHECK(expand_glob((dir / "nothing-*.jsonl").string()).empty());
}
