#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "recycle/analysis.hpp"

namespace {

std::vector<double> normal(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.5, 0.15);
  std::vector<double> v(n);
  for (auto& x : v) x = nd(rng);
  return v;
}

void BM_Spearman(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = normal(n, 1);
  auto y = normal(n, 2);
  for (std::size_t i = 0; i < n; ++i) y[i] += 0.2 * x[i];
  for (auto _ : state) benchmark::DoNotOptimize(recycle::spearman(x, y));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Spearman)->Arg(10000)->Arg(1000000)->Unit(benchmark::kMillisecond);

void BM_Kde(benchmark::State& state) {
  const auto s = normal(static_cast<std::size_t>(state.range(0)), 3);
  const double h = recycle::silverman_bandwidth(s);
  const auto grid = recycle::kde_grid(s, h, 512);
  for (auto _ : state) benchmark::DoNotOptimize(recycle::kde(s, h, grid));
  state.SetItemsProcessed(state.iterations() * state.range(0) * 512);
}
BENCHMARK(BM_Kde)->Arg(1000)->Arg(100000)->Unit(benchmark::kMillisecond);

void BM_Cosine(benchmark::State& state) {
  const auto a = normal(768, 4);
  const auto b = normal(768, 5);
  for (auto _ : state) benchmark::DoNotOptimize(recycle::cosine_similarity(a, b));
}
BENCHMARK(BM_Cosine);

}  // namespace

BENCHMARK_MAIN();
