#include "shareprefill/bench.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <thread>

#include "shareprefill/attention.hpp"
#include "shareprefill/errors.hpp"
#include "shareprefill/synth.hpp"

namespace shareprefill
{
namespace
{
using Clock = std::chrono::steady_clock;

template <typename F>
double mean_ms(std::size_t warmup, std::size_t reps, F&& body)
{
  for (std::size_t i = 0; i < warmup; ++i)
  {
    body();
  }
  double total = 0.0;
  for (std::size_t i = 0; i < reps; ++i)
  {
    const auto t0 = Clock::now();
    body();
    total += std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
  }
  return total / static_cast<double>(reps);
}

std::string cpu_model()
{
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line))
  {
    if (line.rfind("model name", 0) == 0)
    {
      const auto colon = line.find(':');
      if (colon != std::string::npos)
      {
        return line.substr(line.find_first_not_of(' ', colon + 1));
      }
    }
  }
  return "unknown";
}
}  // namespace

BenchEnvironment detect_environment(unsigned threads)
{
  BenchEnvironment env;
  env.cpu = cpu_model();
  env.threads = threads;
  env.hardware_threads = std::thread::hardware_concurrency();
#if defined(__clang__)
  env.compiler = "clang " __clang_version__;
#elif defined(__GNUC__)
  env.compiler = "gcc " __VERSION__;
#else
  env.compiler = "unknown";
#endif
#ifdef NDEBUG
  env.build_type = "optimized";
#else
  env.build_type = "debug";
#endif
  return env;
}

BenchReport run_bench(const BenchOptions& options, std::uint64_t seed, unsigned threads)
{
  BenchReport report;
  report.options = options;
  report.seed = seed;
  report.environment = detect_environment(threads);

  std::vector<std::size_t> ladder = options.ladder;
  std::sort(ladder.begin(), ladder.end());
  ladder.erase(std::unique(ladder.begin(), ladder.end()), ladder.end());

  for (const auto n : ladder)
  {
    const auto input = random_attention_input<float>(n, options.head_dim, seed + n);
    const BlockMask mask = random_sanitized_mask(n, options.block_size, options.density, seed + n);
    const BlockMask full = BlockMask::full_causal(n, options.block_size);

    BenchRow row;
    row.tokens = n;
    row.dense_ms = mean_ms(options.warmup, options.repetitions,
                           [&] { (void)dense_attention(input); });
    row.dense_tiled_ms = mean_ms(options.warmup, options.repetitions,
                                 [&] { (void)sparse_attention(input, full, threads); });
    SparseAttentionOutput<float> last;
    row.sparse_ms = mean_ms(options.warmup, options.repetitions,
                            [&] { last = sparse_attention(input, mask, threads); });
    row.pattern_ms = mean_ms(options.warmup, options.repetitions, [&] {
      (void)estimate_last_block_distribution(input, options.block_size);
      (void)search_vertical_slash(input, 0.9, options.block_size);
    });
    row.speedup = row.dense_ms / row.sparse_ms;
    row.tiled_speedup = row.dense_tiled_ms / row.sparse_ms;
    row.density = last.density();
    row.computed_blocks = last.computed_blocks;
    row.mask_popcount = mask.causal_popcount();
    report.rows.push_back(row);
  }
  return report;
}

std::string bench_to_json(const BenchReport& report)
{
  using nlohmann::json;
  json rows = json::array();
  for (const auto& r : report.rows)
  {
    rows.push_back({{"N", r.tokens},
                    {"dense_ms", r.dense_ms},
                    {"dense_tiled_ms", r.dense_tiled_ms},
                    {"sparse_ms", r.sparse_ms},
                    {"pattern_ms", r.pattern_ms},
                    {"speedup", r.speedup},
                    {"tiled_speedup", r.tiled_speedup},
                    {"density", r.density},
                    {"computed_blocks", r.computed_blocks},
                    {"mask_popcount", r.mask_popcount}});
  }
  const auto& o = report.options;
  const auto& e = report.environment;
  json doc = {{"version", BenchReport::kSchemaVersion},
              {"seed", report.seed},
              {"options",
               {{"ladder", o.ladder},
                {"head_dim", o.head_dim},
                {"block_size", o.block_size},
                {"density", o.density},
                {"warmup", o.warmup},
                {"repetitions", o.repetitions}}},
              {"environment",
               {{"cpu", e.cpu},
                {"threads", e.threads},
                {"hardware_threads", e.hardware_threads},
                {"precision", e.precision},
                {"compiler", e.compiler},
                {"build_type", e.build_type}}},
              {"rows", std::move(rows)}};
  return doc.dump(2);
}

std::string bench_to_csv(const BenchReport& report)
{
  std::ostringstream out;
  out << "N,dense_ms,dense_tiled_ms,sparse_ms,pattern_ms,speedup,tiled_speedup,density,"
         "computed_blocks,mask_popcount\n";
  for (const auto& r : report.rows)
  {
    out << r.tokens << ',' << r.dense_ms << ',' << r.dense_tiled_ms << ',' << r.sparse_ms << ','
        << r.pattern_ms << ',' << r.speedup << ',' << r.tiled_speedup << ',' << r.density << ','
        << r.computed_blocks << ',' << r.mask_popcount << '\n';
  }
  return out.str();
}
}  // namespace shareprefill
