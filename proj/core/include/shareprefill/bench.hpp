#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "shareprefill/config.hpp"

namespace shareprefill
{
struct BenchRow
{
  std::size_t tokens = 0;
  /// Reference dense_attention, mean over repetitions.
  double dense_ms = 0.0;
  /// Block-sparse kernel with the full causal mask.
  double dense_tiled_ms = 0.0;
  /// Block-sparse kernel with the benchmark mask.
  double sparse_ms = 0.0;
  /// Estimate plus vertical-slash search on the same input, kept apart
  /// from the kernel time.
  double pattern_ms = 0.0;
  /// dense_ms / sparse_ms.
  double speedup = 0.0;
  /// dense_tiled_ms / sparse_ms.
  double tiled_speedup = 0.0;
  /// computed_blocks / causal blocks of the sparse run.
  double density = 0.0;
  std::size_t computed_blocks = 0;
  std::size_t mask_popcount = 0;
};

struct BenchEnvironment
{
  std::string cpu;
  unsigned threads = 1;
  unsigned hardware_threads = 0;
  std::string precision = "fp32";
  std::string compiler;
  std::string build_type;
};

struct BenchReport
{
  static constexpr int kSchemaVersion = 1;

  BenchOptions options;
  std::uint64_t seed = 0;
  BenchEnvironment environment;
  /// Sorted by tokens.
  std::vector<BenchRow> rows;
};

BenchEnvironment detect_environment(unsigned threads);

/// For each ladder length: warm-up runs, then timed repetitions of the
/// dense reference, the full-mask kernel and the sparse kernel.
BenchReport run_bench(const BenchOptions& options, std::uint64_t seed, unsigned threads = 1);

std::string bench_to_json(const BenchReport& report);
std::string bench_to_csv(const BenchReport& report);
}  // namespace shareprefill
