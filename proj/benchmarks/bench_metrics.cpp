#include <benchmark/benchmark.h>

#include "idac/metrics.hpp"
#include "idac/numerics.hpp"

namespace {

struct Scores {
  std::vector<double> s;
  std::vector<int> y;
};

Scores sample(std::size_t n) {
  idac::Rng rng(7);
  Scores out;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % 2);
    out.y.push_back(y);
    out.s.push_back(rng.normal() + y);
  }
  return out;
}

void BM_Auroc(benchmark::State& state) {
  const auto d = sample(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(idac::auroc(d.s, d.y));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Auroc)->RangeMultiplier(10)->Range(100, 100000)->Complexity(benchmark::oNLogN);

void BM_Bootstrap(benchmark::State& state) {
  const auto d = sample(500);
  const auto threads = static_cast<unsigned>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(idac::bootstrap_ci(d.s, d.y, 1000, 1, 0.95, threads));
}
BENCHMARK(BM_Bootstrap)->Arg(1)->Arg(4)->UseRealTime();

}  // namespace
