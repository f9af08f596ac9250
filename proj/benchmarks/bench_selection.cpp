#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "recycle/selection.hpp"

namespace {

std::vector<recycle::ScoredDocument> scored(std::size_t n) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<recycle::ScoredDocument> v;
  v.reserve(n);
  for (std::size_t i = 0; i < n; ++i) v.push_back({"doc" + std::to_string(i), u(rng), "bench", 100 + rng() % 900});
  return v;
}

void BM_SelectTopDocuments(benchmark::State& state) {
  const auto v = scored(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(recycle::select_top_fraction(v, 0.10));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SelectTopDocuments)->Arg(10000)->Arg(100000)->Arg(1000000)->Unit(benchmark::kMillisecond);

void BM_SelectTokenMass(benchmark::State& state) {
  const auto v = scored(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(recycle::select_top_fraction(v, 0.10, recycle::SelectionMode::kTokenMass));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SelectTokenMass)->Arg(100000)->Unit(benchmark::kMillisecond);

void BM_ScoreQuantile(benchmark::State& state) {
  const auto v = scored(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(recycle::score_quantile(v, 0.9));
}
BENCHMARK(BM_ScoreQuantile)->Arg(1000000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
