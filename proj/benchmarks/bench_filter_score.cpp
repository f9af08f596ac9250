#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "recycle/classifier.hpp"
#include "recycle/heuristic_filter.hpp"

namespace {

std::string lines(std::mt19937_64& rng, std::size_t n_lines, std::size_t per_line, const std::string& prefix) {
  std::string s;
  for (std::size_t l = 0; l < n_lines; ++l) {
    if (l) s += '\n';
    for (std::size_t w = 0; w < per_line; ++w) {
      if (w) s += ' ';
      s += prefix + std::to_string(rng() % 3000);
    }
  }
  return s;
}

void BM_FilterEvaluate(benchmark::State& state) {
  std::mt19937_64 rng(1);
  recycle::Document doc;
  doc.id = "d";
  doc.text = lines(rng, static_cast<std::size_t>(state.range(0)), 20, "w");
  doc.token_count = static_cast<std::uint64_t>(state.range(0)) * 20;
  doc.metadata["url"] = "https://news.example.com/a/b";
  recycle::FilterConfig cfg;
  cfg.url_blocklist = {"spam.example", "ads.example.net"};
  for (auto _ : state) benchmark::DoNotOptimize(recycle::evaluate(doc, cfg));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(doc.text.size()));
}
BENCHMARK(BM_FilterEvaluate)->Arg(10)->Arg(1000);

void BM_ClassifierScore(benchmark::State& state) {
  std::mt19937_64 rng(2);
  std::vector<recycle::LabeledText> examples;
  for (int i = 0; i < 200; ++i) {
    examples.push_back({lines(rng, 2, 30, "good"), 1});
    examples.push_back({lines(rng, 2, 30, "bad"), 0});
  }
  recycle::TrainHyperparams hyper;
  hyper.bucket_count = 1 << 18;
  const recycle::ClassifierModel model = recycle::train(examples, hyper, 1);
  const std::string text = lines(rng, 10, 50, "good");
  for (auto _ : state) benchmark::DoNotOptimize(model.score(text));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(text.size()));
}
BENCHMARK(BM_ClassifierScore);

}  // namespace

BENCHMARK_MAIN();
