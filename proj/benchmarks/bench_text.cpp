#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "recycle/analysis.hpp"
#include "recycle/tokenizer.hpp"

namespace {

std::string words(std::mt19937_64& rng, std::size_t n, std::size_t vocab) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) s += (i % 17 == 0) ? '\n' : ' ';
    s += "w" + std::to_string(rng() % vocab);
  }
  return s;
}

std::vector<recycle::Document> corpus(std::size_t docs, std::size_t words_per_doc) {
  std::mt19937_64 rng(2);
  std::vector<recycle::Document> v(docs);
  for (std::size_t i = 0; i < docs; ++i) {
    v[i].id = "d" + std::to_string(i);
    v[i].text = words(rng, words_per_doc, 20000);
    v[i].token_count = words_per_doc;
  }
  return v;
}

void BM_WhitespaceCount(benchmark::State& state) {
  std::mt19937_64 rng(3);
  const std::string text = words(rng, static_cast<std::size_t>(state.range(0)), 5000);
  const auto tok = recycle::get_tokenizer("ws");
  for (auto _ : state) benchmark::DoNotOptimize(tok->count(text));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(text.size()));
}
BENCHMARK(BM_WhitespaceCount)->Arg(1000)->Arg(100000);

void BM_UniqueBigrams(benchmark::State& state) {
  const auto docs = corpus(static_cast<std::size_t>(state.range(0)), 300);
  for (auto _ : state) benchmark::DoNotOptimize(recycle::unique_bigrams(docs));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_UniqueBigrams)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_DiversityCurve(benchmark::State& state) {
  const auto docs = corpus(5000, 300);
  const std::vector<std::uint64_t> sizes = {500, 1000, 2000, 5000};
  for (auto _ : state) {
    benchmark::DoNotOptimize(recycle::diversity_curve(docs, recycle::CurveAxis::kDocuments, sizes, 1));
  }
}
BENCHMARK(BM_DiversityCurve)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
