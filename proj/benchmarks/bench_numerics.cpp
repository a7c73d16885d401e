#include <benchmark/benchmark.h>

#include "idac/model.hpp"
#include "idac/numerics.hpp"

namespace {

idac::Matrix filled(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  idac::Rng rng(seed);
  idac::Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.uniform() - 0.5;
  return m;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const idac::Matrix a = filled(512, n, 1);
  const idac::Matrix b = filled(n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(idac::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * 512 * state.range(0) * state.range(0));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);

void BM_MlpStep(benchmark::State& state) {
  // One forward/backward pass of the 10-256-256-3 network on a 512-row batch.
  const idac::MlpState mlp = idac::init_mlp(idac::MlpSpec{10, {256, 256}, 2, true}, idac::Rng(3));
  const idac::Matrix x = filled(512, 10, 4);
  const idac::Matrix g = filled(512, 3, 5);
  for (auto _ : state) {
    const auto fwd = idac::forward(mlp, x);
    benchmark::DoNotOptimize(idac::backward(mlp, fwd.cache, g));
  }
}
BENCHMARK(BM_MlpStep);

void BM_Softmax(benchmark::State& state) {
  const idac::Matrix z = filled(4096, static_cast<std::size_t>(state.range(0)), 6);
  for (auto _ : state) benchmark::DoNotOptimize(idac::softmax_rows(z));
}
BENCHMARK(BM_Softmax)->Arg(2)->Arg(10);

}  // namespace
