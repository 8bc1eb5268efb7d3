#include "commands.hpp"

#include <spdlog/spdlog.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include <shareprefill/bench.hpp>
#include <shareprefill/clustering.hpp>
#include <shareprefill/errors.hpp>
#include <shareprefill/head_dict.hpp>
#include <shareprefill/pgm.hpp>
#include <shareprefill/pipeline.hpp>
#include <shareprefill/synth.hpp>

namespace shareprefill::cli
{
namespace fs = std::filesystem;

namespace
{
fs::path prepare_out_dir(const Config& config)
{
  const fs::path dir(config.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
  {
    throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  }
  return dir;
}

void write_text(const fs::path& path, const std::string& text)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
  {
    throw IoError("cannot open " + path.string() + " for writing");
  }
  out << text;
  if (!out)
  {
    throw IoError("failed writing " + path.string());
  }
}

/// Cumulative gamma-selection over a row-normalized R x R map, keeping the
/// causal region only.
BlockMask map_mask(const Matrix<float>& map, double gamma)
{
  const std::size_t r = map.rows();
  std::vector<double> flat(r * r, 0.0);
  for (std::size_t i = 0; i < r; ++i)
  {
    for (std::size_t j = 0; j <= i; ++j)
    {
      flat[i * r + j] = static_cast<double>(map(i, j));
    }
  }
  BlockMask mask(r, 1);
  for (const auto idx : select_cumulative(flat, gamma))
  {
    mask.set(idx / r, idx % r);
  }
  return mask;
}

std::string jaccard_csv(const Matrix<double>& m)
{
  std::string out;
  char buf[32];
  for (std::size_t i = 0; i < m.rows(); ++i)
  {
    for (std::size_t j = 0; j < m.cols(); ++j)
    {
      std::snprintf(buf, sizeof buf, "%s%.6f", j == 0 ? "" : ",", m(i, j));
      out += buf;
    }
    out += '\n';
  }
  return out;
}
}  // namespace

int cmd_calibrate(const Config& config)
{
  const fs::path dir = prepare_out_dir(config);
  const ModelSpec spec = config.calibration_model();
  spdlog::info("calibrating on {} layers x {} heads, {} tokens, R={}", spec.layers, spec.heads,
               spec.tokens, config.calibration.resolution);
  const SyntheticModel model = synth_model_generate(spec);

  AttentionMapFile file;
  file.layers = spec.layers;
  file.heads = spec.heads;
  file.resolution = config.calibration.resolution;
  file.records = record_calibration(model.heads, config.calibration.resolution);
  const fs::path path = dir / "calibration.amap";
  write_amap(file, path.string());
  spdlog::info("wrote {} maps to {}", file.records.size(), path.string());
  return kOk;
}

int cmd_cluster(const Config& config, const std::string& amap_path)
{
  const fs::path dir = prepare_out_dir(config);
  const AttentionMapFile file = read_amap(amap_path);
  const auto embedder = make_embedder(FlattenL2Embedder::kId);

  std::vector<HeadKey> keys;
  std::vector<std::vector<double>> embeddings;
  for (const auto& rec : file.records)
  {
    keys.push_back({rec.layer, rec.head});
    embeddings.push_back(embedder->embed(rec));
  }
  HeadDict dict = hierarchical_cluster(keys, embeddings, config.cluster, embedder->id());
  dict.calibration_source = fs::path(amap_path).filename().string();

  const fs::path path = dir / "head_dict.json";
  save_head_dict(dict, path.string());
  spdlog::info("{} clusters, {} noise heads; wrote {}", dict.num_clusters(), dict.noise_count(),
               path.string());
  for (const auto& [cluster, size] : dict.cluster_sizes())
  {
    std::printf("cluster %d: %zu heads\n", cluster, size);
  }
  std::printf("noise: %zu heads\n", dict.noise_count());
  return kOk;
}

int cmd_prefill(const Config& config, const std::string& head_dict_path)
{
  const fs::path dir = prepare_out_dir(config);
  const HeadDict dict = load_head_dict(head_dict_path);

  PrefillOptions options;
  options.mode = config.mode;
  options.threads = config.threads;
  if (config.dump_masks)
  {
    options.mask_dump_dir = (dir / "masks").string();
  }
  spdlog::info("prefill: {} layers x {} heads, N={}, mode {}", config.model.layers,
               config.model.heads, config.model.tokens, to_string(config.mode));
  const PrefillResult result = run_prefill(config.model, dict, config.thresholds, options);

  const fs::path path = dir / "trace.json";
  save_trace(result.trace, path.string());

  const Metrics m = compute_metrics(result.trace);
  std::printf("density %.6f  dense %zu  shared %zu  vertical_slash %zu\n", m.density,
              m.counts.dense, m.counts.shared, m.counts.vertical_slash);
  if (m.rel_error_max)
  {
    std::printf("rel_error p50 %.3g  p90 %.3g  max %.3g\n", *m.rel_error_p50, *m.rel_error_p90,
                *m.rel_error_max);
  }
  spdlog::info("wrote {}", path.string());

  const auto violations = trace_violations(result.trace, dict);
  for (const auto& v : violations)
  {
    spdlog::error("invariant violated: {}", v);
  }
  if (!violations.empty())
  {
    throw InvariantFailure(std::to_string(violations.size()) + " trace invariant(s) violated");
  }
  return kOk;
}

int cmd_bench(const Config& config)
{
  const fs::path dir = prepare_out_dir(config);
  for (const auto n : config.bench.ladder)
  {
    if (n > kDeskScaleTokens)
    {
      spdlog::warn("N={} is beyond desk scale; dense attention needs O(N^2) time and the "
                   "inputs take {} MiB per head",
                   n, 3 * n * config.bench.head_dim * sizeof(float) / (1024 * 1024));
    }
  }
  const BenchReport report = run_bench(config.bench, config.model.seed, config.threads);
  write_text(dir / "bench.json", bench_to_json(report) + "\n");
  write_text(dir / "bench.csv", bench_to_csv(report));
  std::printf("%8s %12s %14s %12s %10s %9s\n", "N", "dense_ms", "dense_tiled_ms", "sparse_ms",
              "speedup", "density");
  for (const auto& r : report.rows)
  {
    std::printf("%8zu %12.3f %14.3f %12.3f %10.3f %9.4f\n", r.tokens, r.dense_ms,
                r.dense_tiled_ms, r.sparse_ms, r.speedup, r.density);
    if (r.computed_blocks != r.mask_popcount)
    {
      throw InvariantFailure("computed blocks differ from mask popcount at N=" +
                             std::to_string(r.tokens));
    }
  }
  return kOk;
}

int cmd_diagnose_pooling(std::uint64_t seed, std::size_t cases)
{
  std::printf("%-24s %10s %10s %10s  %s\n", "case", "pooled", "aligned", "all-pairs", "note");
  const auto row = [](const char* name, const PoolingDiagnostic& d, const char* note) {
    std::printf("%-24s %10.6f %10.6f %10.6f  %s\n", name, d.pooled_product, d.true_block_mean,
                d.all_pairs_mean, note);
  };
  const std::vector<double> q{0, 0, 1};
  row("Q=[0,0,1] K=[0,1,0]", pooling_estimate_diagnostic(q, std::vector<double>{0, 1, 0}),
      "pooled 1/9 overestimates a true mean of 0");
  row("Q=[0,0,1] K=[0,-1,1]", pooling_estimate_diagnostic(q, std::vector<double>{0, -1, 1}),
      "pooled 0 underestimates; aligned mean is 1/3, not 1/9");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> length(2, 8);
  std::size_t over = 0;
  std::size_t under = 0;
  std::size_t equal = 0;
  for (std::size_t c = 0; c < cases; ++c)
  {
    const std::size_t b = length(rng);
    std::vector<double> qs(b);
    std::vector<double> ks(b);
    for (std::size_t i = 0; i < b; ++i)
    {
      qs[i] = normal(rng);
      ks[i] = normal(rng);
    }
    const auto d = pooling_estimate_diagnostic(qs, ks);
    const double diff = d.pooled_product - d.true_block_mean;
    if (std::abs(diff) <= 1e-12)
    {
      ++equal;
    }
    else if (diff > 0)
    {
      ++over;
    }
    else
    {
      ++under;
    }
  }
  std::printf("\nrandom 1-d blocks (seed %llu, %zu cases, length 2..8):\n",
              static_cast<unsigned long long>(seed), cases);
  std::printf("  pooled > aligned: %zu\n  pooled < aligned: %zu\n  equal: %zu\n", over, under,
              equal);
  return kOk;
}

int cmd_similarity(const Config& config, const std::optional<std::string>& amap_path)
{
  const fs::path dir = prepare_out_dir(config);
  std::vector<BlockMask> masks;
  if (amap_path)
  {
    const AttentionMapFile file = read_amap(*amap_path);
    for (const auto& rec : file.records)
    {
      masks.push_back(map_mask(rec.map, config.thresholds.gamma));
    }
    spdlog::info("similarity over {} calibration maps", masks.size());
  }
  else
  {
    const SyntheticModel model = synth_model_generate(config.model);
    for (const auto& h : model.heads)
    {
      const auto full = BlockMask::full_causal(config.model.tokens, config.model.block_size);
      const auto run = sparse_attention(h.input, full, config.threads);
      masks.push_back(build_pivotal_entry(run.stats, config.thresholds.gamma, h.input.causal,
                                          /*sanitize=*/false)
                          .mask);
    }
    spdlog::info("similarity over {} dense-pass masks", masks.size());
  }
  const JaccardMatrix jm = jaccard_similarity_matrix(masks);
  for (const auto& [a, b] : jm.empty_pairs)
  {
    spdlog::warn("heads {} and {} both have empty masks; similarity set to 0", a, b);
  }
  write_text(dir / "similarity.csv", jaccard_csv(jm.similarity));
  const std::size_t scale = std::max<std::size_t>(1, 512 / std::max<std::size_t>(1, masks.size()));
  write_pgm(heatmap_image(jm.similarity, scale), (dir / "similarity.pgm").string());
  spdlog::info("wrote {} and {}", (dir / "similarity.csv").string(),
               (dir / "similarity.pgm").string());
  return kOk;
}
}  // namespace shareprefill::cli
