#include "shareprefill/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "json_io.hpp"
#include "shareprefill/errors.hpp"
#include "shareprefill/pgm.hpp"

namespace shareprefill
{
namespace
{
using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since)
{
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

double percentile(std::vector<double> values, double q)
{
  std::sort(values.begin(), values.end());
  // Nearest-rank.
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size())));
  return values[std::clamp<std::size_t>(rank, 1, values.size()) - 1];
}
}  // namespace

const char* to_string(RunMode mode)
{
  switch (mode)
  {
    case RunMode::Sparse:
      return "sparse";
    case RunMode::Dense:
      return "dense";
    case RunMode::Both:
      return "both";
  }
  return "unknown";
}

RunMode run_mode_from_string(const std::string& name)
{
  if (name == "sparse")
  {
    return RunMode::Sparse;
  }
  if (name == "dense")
  {
    return RunMode::Dense;
  }
  if (name == "both")
  {
    return RunMode::Both;
  }
  throw InvalidInput("unknown mode '" + name + "' (expected sparse, dense or both)");
}

const char* to_string(HeadCategory category)
{
  switch (category)
  {
    case HeadCategory::Dense:
      return "dense";
    case HeadCategory::Shared:
      return "shared";
    case HeadCategory::VerticalSlash:
      return "vertical_slash";
  }
  return "unknown";
}

PrefillResult run_prefill(const SyntheticModel& model, const HeadDict& head_dict,
                          const Thresholds& thresholds, const PrefillOptions& options)
{
  const ModelSpec& spec = model.spec;
  thresholds.validate();
  if (!head_dict.covers(spec.layers, spec.heads))
  {
    for (const auto& h : model.heads)
    {
      head_dict.cluster_of(h.layer, h.head);
    }
  }
  if (!options.mask_dump_dir.empty())
  {
    std::filesystem::create_directories(options.mask_dump_dir);
  }

  PrefillResult result;
  result.trace.model = spec;
  result.trace.thresholds = thresholds;
  result.trace.mode = options.mode;

  PivotalPatternDict pivots;
  pivots.clear();
  const auto pass_start = Clock::now();

  for (const auto& h : model.heads)
  {
    const auto& input = h.input;
    if (input.tokens() != spec.tokens || input.head_dim() != spec.head_dim)
    {
      throw InvalidInput("head (" + std::to_string(h.layer) + ", " + std::to_string(h.head) +
                         ") does not match the model shape");
    }
    HeadResult hr;
    hr.layer = h.layer;
    hr.head = h.head;
    hr.cluster = head_dict.cluster_of(h.layer, h.head);
    hr.total_blocks = reachable_block_total(spec.tokens, spec.block_size, input.causal);

    if (options.mode == RunMode::Dense)
    {
      const auto t0 = Clock::now();
      auto out = dense_attention(input);
      hr.timings.dense_ms = elapsed_ms(t0);
      hr.category = HeadCategory::Dense;
      hr.computed_blocks = hr.total_blocks;
      hr.density = 1.0;
      if (options.keep_outputs)
      {
        result.outputs.push_back(std::move(out));
      }
      result.masks.push_back(BlockMask::full_causal(spec.tokens, spec.block_size));
      result.trace.heads.push_back(std::move(hr));
      continue;
    }

    auto t0 = Clock::now();
    const ProbVector a_hat = estimate_last_block_distribution(input, spec.block_size);
    hr.timings.estimate_ms = elapsed_ms(t0);

    t0 = Clock::now();
    const PatternDecision decision =
        determine_sparse_pattern(a_hat, h.layer, h.head, head_dict, pivots, thresholds);
    BlockMask mask;
    if (decision.kind == PatternKind::SharedPivot)
    {
      hr.dense_seed = !pivots.contains(hr.cluster);
      mask = share_pivotal_pattern(h.layer, h.head, head_dict, pivots, spec.tokens,
                                   spec.block_size);
      hr.category = hr.dense_seed ? HeadCategory::Dense : HeadCategory::Shared;
    }
    else
    {
      mask = search_vertical_slash(input, thresholds.gamma, spec.block_size);
      hr.category = HeadCategory::VerticalSlash;
    }
    hr.timings.pattern_ms = elapsed_ms(t0);
    hr.decision = decision;

    t0 = Clock::now();
    auto sparse = sparse_attention(input, mask, options.threads);
    hr.timings.kernel_ms = elapsed_ms(t0);
    hr.computed_blocks = sparse.computed_blocks;
    hr.density = sparse.density();

    t0 = Clock::now();
    hr.updated_pivot = construct_pivotal_pattern(sparse.stats, thresholds.gamma, h.layer, h.head,
                                                 head_dict, pivots, input.causal);
    hr.timings.construct_ms = elapsed_ms(t0);

    if (options.mode == RunMode::Both)
    {
      t0 = Clock::now();
      const auto dense = dense_attention(input);
      hr.timings.dense_ms = elapsed_ms(t0);
      hr.rel_error = relative_frobenius_error(sparse.output, dense);
    }
    if (!options.mask_dump_dir.empty())
    {
      write_pgm(mask_image(mask),
                (std::filesystem::path(options.mask_dump_dir) /
                 ("mask_L" + std::to_string(h.layer) + "_H" + std::to_string(h.head) + ".pgm"))
                    .string());
    }
    if (options.keep_outputs)
    {
      result.outputs.push_back(std::move(sparse.output));
    }
    result.masks.push_back(std::move(mask));
    result.trace.heads.push_back(std::move(hr));
  }

  auto& agg = result.trace.aggregate;
  for (const auto& hr : result.trace.heads)
  {
    agg.computed_blocks += hr.computed_blocks;
    agg.total_blocks += hr.total_blocks;
    switch (hr.category)
    {
      case HeadCategory::Dense:
        ++agg.counts.dense;
        break;
      case HeadCategory::Shared:
        ++agg.counts.shared;
        break;
      case HeadCategory::VerticalSlash:
        ++agg.counts.vertical_slash;
        break;
    }
  }
  agg.total_density = agg.total_blocks == 0 ? 0.0
                                            : static_cast<double>(agg.computed_blocks) /
                                                  static_cast<double>(agg.total_blocks);
  agg.wall_ms = elapsed_ms(pass_start);
  return result;
}

PrefillResult run_prefill(const ModelSpec& spec, const HeadDict& head_dict,
                          const Thresholds& thresholds, const PrefillOptions& options)
{
  return run_prefill(synth_model_generate(spec), head_dict, thresholds, options);
}

Metrics compute_metrics(const RunTrace& trace)
{
  Metrics m;
  m.heads = trace.heads.size();
  std::size_t computed = 0;
  std::size_t total = 0;
  double density_sum = 0.0;
  std::vector<double> errors;
  for (const auto& hr : trace.heads)
  {
    computed += hr.computed_blocks;
    total += hr.total_blocks;
    density_sum += hr.density;
    switch (hr.category)
    {
      case HeadCategory::Dense:
        ++m.counts.dense;
        break;
      case HeadCategory::Shared:
        ++m.counts.shared;
        break;
      case HeadCategory::VerticalSlash:
        ++m.counts.vertical_slash;
        break;
    }
    if (hr.rel_error)
    {
      errors.push_back(*hr.rel_error);
    }
  }
  m.density = total == 0 ? 0.0 : static_cast<double>(computed) / static_cast<double>(total);
  m.mean_head_density = m.heads == 0 ? 0.0 : density_sum / static_cast<double>(m.heads);
  if (!errors.empty())
  {
    m.rel_error_p50 = percentile(errors, 0.5);
    m.rel_error_p90 = percentile(errors, 0.9);
    m.rel_error_max = *std::max_element(errors.begin(), errors.end());
  }
  return m;
}

std::vector<std::string> trace_violations(const RunTrace& trace, const HeadDict& head_dict)
{
  std::vector<std::string> out;
  const auto expected = trace.model.layers * trace.model.heads;
  const auto& counts = trace.aggregate.counts;
  if (counts.total() != expected || trace.heads.size() != expected)
  {
    out.push_back("pattern counts sum to " + std::to_string(counts.total()) + " over " +
                  std::to_string(trace.heads.size()) + " heads, expected " +
                  std::to_string(expected));
  }
  std::map<int, std::size_t> seeds;
  for (const auto& hr : trace.heads)
  {
    const std::string where =
        "head (" + std::to_string(hr.layer) + ", " + std::to_string(hr.head) + ")";
    if (!(hr.density > 0.0 && hr.density <= 1.0))
    {
      out.push_back(where + " has density " + std::to_string(hr.density) + " outside (0, 1]");
    }
    if (hr.dense_seed)
    {
      if (hr.density != 1.0)
      {
        out.push_back(where + " is a dense seed with density " + std::to_string(hr.density));
      }
      if (++seeds[hr.cluster] > 1)
      {
        out.push_back(where + " is a second dense seed of cluster " +
                      std::to_string(hr.cluster));
      }
    }
    const bool noise = hr.cluster == head_dict.noise_cluster_id();
    if (noise && hr.decision && hr.decision->kind == PatternKind::SharedPivot)
    {
      out.push_back(where + " is in the noise cluster but shared a pivotal pattern");
    }
  }
  return out;
}

std::string trace_to_json(const RunTrace& trace, bool include_timings)
{
  using nlohmann::json;
  json heads = json::array();
  for (const auto& hr : trace.heads)
  {
    json row = {{"layer", hr.layer},
                {"head", hr.head},
                {"cluster", hr.cluster},
                {"category", to_string(hr.category)},
                {"dense_seed", hr.dense_seed},
                {"updated_pivot", hr.updated_pivot},
                {"computed_blocks", hr.computed_blocks},
                {"total_blocks", hr.total_blocks},
                {"density", hr.density}};
    if (hr.decision)
    {
      json decision = {{"kind", to_string(hr.decision->kind)}};
      decision["d_sparse"] = hr.decision->d_sparse ? json(*hr.decision->d_sparse) : json(nullptr);
      decision["d_sim"] = hr.decision->d_sim ? json(*hr.decision->d_sim) : json(nullptr);
      row["decision"] = std::move(decision);
    }
    if (hr.rel_error)
    {
      row["rel_error"] = *hr.rel_error;
    }
    if (include_timings)
    {
      row["timings_ms"] = {{"estimate", hr.timings.estimate_ms},
                           {"pattern", hr.timings.pattern_ms},
                           {"kernel", hr.timings.kernel_ms},
                           {"construct", hr.timings.construct_ms},
                           {"dense", hr.timings.dense_ms}};
    }
    heads.push_back(std::move(row));
  }

  const auto& agg = trace.aggregate;
  json aggregate = {{"computed_blocks", agg.computed_blocks},
                    {"total_blocks", agg.total_blocks},
                    {"total_density", agg.total_density},
                    {"counts",
                     {{"dense", agg.counts.dense},
                      {"shared", agg.counts.shared},
                      {"vertical_slash", agg.counts.vertical_slash}}}};
  if (include_timings)
  {
    aggregate["wall_ms"] = agg.wall_ms;
  }

  const Metrics metrics = compute_metrics(trace);
  json errors = json::object();
  if (metrics.rel_error_max)
  {
    errors = {{"p50", *metrics.rel_error_p50},
              {"p90", *metrics.rel_error_p90},
              {"max", *metrics.rel_error_max}};
  }
  aggregate["rel_error"] = std::move(errors);

  json doc = {{"version", RunTrace::kSchemaVersion},
              {"config",
               {{"model", trace.model}, {"thresholds", trace.thresholds}, {"mode", to_string(trace.mode)}}},
              {"heads", std::move(heads)},
              {"aggregate", std::move(aggregate)}};
  return doc.dump(2);
}

void save_trace(const RunTrace& trace, const std::string& path)
{
  std::ofstream out(path);
  if (!out)
  {
    throw IoError("cannot open " + path + " for writing");
  }
  out << trace_to_json(trace) << '\n';
  if (!out)
  {
    throw IoError("failed writing " + path);
  }
}
}  // namespace shareprefill
