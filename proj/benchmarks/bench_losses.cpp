#include <benchmark/benchmark.h>

#include "idac/losses.hpp"

namespace {

idac::Matrix logits(std::size_t rows, std::size_t cols) {
  idac::Rng rng(1);
  idac::Matrix m(rows, cols);
  for (double& v : m.values()) v = 4.0 * rng.uniform() - 2.0;
  return m;
}

void BM_Loss(benchmark::State& state) {
  const auto kind = static_cast<idac::LossKind>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  idac::LossSpec spec;
  spec.kind = kind;
  spec.alpha = 1.0;
  spec.eta_tilde = 0.3;
  spec.q = 0.7;
  spec.a = 1.0;
  const idac::Matrix z = logits(n, idac::has_abstention(kind) ? 3 : 2);
  std::vector<int> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = static_cast<int>(i % 2);
  for (auto _ : state) benchmark::DoNotOptimize(idac::compute_loss(spec, z, t, 1.0));
  state.SetLabel(std::string(idac::to_string(kind)));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

void loss_args(benchmark::internal::Benchmark* b) {
  for (auto kind : {idac::LossKind::CE, idac::LossKind::SCE, idac::LossKind::DAC, idac::LossKind::IDAC,
                    idac::LossKind::NCE, idac::LossKind::NGCE, idac::LossKind::AGCE}) {
    b->Args({static_cast<std::int64_t>(kind), 512});
  }
}

}  // namespace

BENCHMARK(BM_Loss)->Apply(loss_args);
