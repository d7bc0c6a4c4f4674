#include <benchmark/benchmark.h>

#include "moc/moc.hpp"
#include "moc/random.hpp"

namespace {

using namespace moc;

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Matrix a = random_normal(n, n, rng);
  const Matrix b = random_normal(n, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

// Forward + backward of one layer; args are (tokens, d, d_ffn, K or 0 for dense).
void BM_TrainStep(benchmark::State& state) {
  const auto s = static_cast<std::size_t>(state.range(0));
  const auto d = static_cast<std::size_t>(state.range(1));
  const auto d_ffn = static_cast<std::size_t>(state.range(2));
  const auto k = static_cast<std::size_t>(state.range(3));
  const bool gcp = state.range(4) != 0;
  Rng rng(2);
  const FfnWeights w = FfnWeights::random(d, d_ffn, rng);
  const Matrix x = random_normal(s, d, rng);
  const Matrix grad_out = random_normal(s, d, rng);
  if (k == 0) {
    for (auto _ : state) {
      auto fwd = ffn_forward(x, w, gcp);
      benchmark::DoNotOptimize(ffn_backward(fwd.tape, grad_out, w));
    }
  } else {
    const MocConfig cfg = MocConfig::top_k(k, Criterion::PreSiluValue, gcp);
    for (auto _ : state) {
      auto fwd = moc_forward(x, w, cfg);
      benchmark::DoNotOptimize(moc_backward(fwd.tape, grad_out, w, cfg));
    }
  }
}
BENCHMARK(BM_TrainStep)
    ->ArgNames({"s", "d", "d_ffn", "K", "gcp"})
    ->Args({128, 128, 344, 0, 0})
    ->Args({128, 128, 344, 0, 1})
    ->Args({128, 128, 344, 64, 0})
    ->Args({128, 128, 344, 64, 1});

// Single-token decode: dense forward against the sparse path.
void BM_Decode(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const auto d_ffn = static_cast<std::size_t>(state.range(1));
  const auto k = static_cast<std::size_t>(state.range(2));
  Rng rng(3);
  const FfnWeights w = FfnWeights::random(d, d_ffn, rng);
  const Matrix x = random_normal(1, d, rng);
  if (k == 0) {
    for (auto _ : state) benchmark::DoNotOptimize(ffn_forward(x, w).out);
  } else {
    const MocConfig cfg = MocConfig::top_k(k);
    for (auto _ : state) benchmark::DoNotOptimize(decode_token(x, w, cfg).out);
  }
}
BENCHMARK(BM_Decode)
    ->ArgNames({"d", "d_ffn", "K"})
    ->Args({512, 1376, 0})
    ->Args({512, 1376, 128})
    ->Args({1024, 2736, 0})
    ->Args({1024, 2736, 512});

void BM_TopKMask(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  Rng rng(4);
  const Matrix g = random_normal(256, 1376, rng);
  for (auto _ : state) benchmark::DoNotOptimize(topk_mask(g, k));
}
BENCHMARK(BM_TopKMask)->Arg(128)->Arg(688);

}  // namespace
BENCHMARK_MAIN();
