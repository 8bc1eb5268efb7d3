#include <benchmark/benchmark.h>

#include <shareprefill/attention.hpp>
#include <shareprefill/pattern.hpp>
#include <shareprefill/synth.hpp>

namespace sp = shareprefill;

namespace
{
constexpr std::size_t kHeadDim = 64;
constexpr std::size_t kBlock = 64;

void BM_DenseAttention(benchmark::State& state)
{
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto input = sp::random_attention_input<float>(n, kHeadDim, 1);
  for (auto _ : state)
  {
    benchmark::DoNotOptimize(sp::dense_attention(input));
  }
}

void BM_TiledFullMask(benchmark::State& state)
{
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto input = sp::random_attention_input<float>(n, kHeadDim, 1);
  const auto mask = sp::BlockMask::full_causal(n, kBlock);
  for (auto _ : state)
  {
    benchmark::DoNotOptimize(sp::sparse_attention(input, mask));
  }
}

/// range(1) is the mask density in percent.
void BM_SparseAttention(benchmark::State& state)
{
  const auto n = static_cast<std::size_t>(state.range(0));
  const double density = static_cast<double>(state.range(1)) / 100.0;
  const auto input = sp::random_attention_input<float>(n, kHeadDim, 1);
  const auto mask = sp::random_sanitized_mask(n, kBlock, density, 1);
  for (auto _ : state)
  {
    benchmark::DoNotOptimize(sp::sparse_attention(input, mask));
  }
  state.counters["density"] = mask.causal_density();
}

void BM_PatternSearch(benchmark::State& state)
{
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto input = sp::random_attention_input<float>(n, kHeadDim, 1);
  for (auto _ : state)
  {
    benchmark::DoNotOptimize(sp::estimate_last_block_distribution(input, kBlock));
    benchmark::DoNotOptimize(sp::search_vertical_slash(input, 0.9, kBlock));
  }
}
}  // namespace

BENCHMARK(BM_DenseAttention)->Arg(1024)->Arg(2048)->Arg(4096)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TiledFullMask)->Arg(1024)->Arg(2048)->Arg(4096)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SparseAttention)
    ->ArgsProduct({{1024, 2048, 4096}, {10, 25, 50}})
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PatternSearch)->Arg(1024)->Arg(2048)->Arg(4096)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
