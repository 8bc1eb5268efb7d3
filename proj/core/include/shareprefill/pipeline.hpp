#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shareprefill/head_dict.hpp"
#include "shareprefill/matrix.hpp"
#include "shareprefill/pattern.hpp"
#include "shareprefill/synth.hpp"

namespace shareprefill
{
enum class RunMode
{
  Sparse,  ///< pattern engine + block-sparse kernel
  Dense,   ///< dense reference attention only
  Both,    ///< sparse, plus dense per head for rel_error
};

const char* to_string(RunMode mode);
RunMode run_mode_from_string(const std::string& name);

/// How a head's mask was obtained.
enum class HeadCategory
{
  Dense,          ///< dense seed of a cluster, or any head in dense mode
  Shared,         ///< reused its cluster's pivotal pattern
  VerticalSlash,  ///< searched its own vertical/slash pattern
};

const char* to_string(HeadCategory category);

struct HeadTimings
{
  double estimate_ms = 0.0;
  double pattern_ms = 0.0;
  double kernel_ms = 0.0;
  double construct_ms = 0.0;
  double dense_ms = 0.0;
};

struct HeadResult
{
  std::size_t layer = 0;
  std::size_t head = 0;
  int cluster = 0;
  HeadCategory category = HeadCategory::Dense;
  /// Absent in dense mode.
  std::optional<PatternDecision> decision;
  bool dense_seed = false;
  /// Whether this head (re)wrote its cluster's pivotal entry.
  bool updated_pivot = false;
  std::size_t computed_blocks = 0;
  std::size_t total_blocks = 0;
  double density = 1.0;
  /// ||O_sparse - O_dense||_F / ||O_dense||_F, mode Both only.
  std::optional<double> rel_error;
  HeadTimings timings;
};

struct PatternCounts
{
  std::size_t dense = 0;
  std::size_t shared = 0;
  std::size_t vertical_slash = 0;

  std::size_t total() const { return dense + shared + vertical_slash; }
  bool operator==(const PatternCounts&) const = default;
};

struct TraceAggregate
{
  std::size_t computed_blocks = 0;
  std::size_t total_blocks = 0;
  double total_density = 0.0;
  PatternCounts counts;
  double wall_ms = 0.0;
};

struct RunTrace
{
  static constexpr int kSchemaVersion = 1;

  ModelSpec model;
  Thresholds thresholds;
  RunMode mode = RunMode::Sparse;
  std::vector<HeadResult> heads;
  TraceAggregate aggregate;
};

struct PrefillOptions
{
  RunMode mode = RunMode::Sparse;
  unsigned threads = 1;
  /// Keep per-head outputs (dense outputs in dense mode, sparse otherwise).
  bool keep_outputs = false;
  /// When non-empty, each head's mask is written there as a PGM image.
  std::string mask_dump_dir;
};

struct PrefillResult
{
  RunTrace trace;
  std::vector<Matrix<float>> outputs;
  /// Final mask per head (full causal in dense mode).
  std::vector<BlockMask> masks;
};

/// One prefill pass over the model's heads, layer by layer and in ascending
/// head order within a layer. The pivotal pattern dictionary lives for this
/// call only. Throws LookupError when `head_dict` misses a head.
PrefillResult run_prefill(const SyntheticModel& model, const HeadDict& head_dict,
                          const Thresholds& thresholds, const PrefillOptions& options = {});

/// Generates the model from `spec`, then runs it.
PrefillResult run_prefill(const ModelSpec& spec, const HeadDict& head_dict,
                          const Thresholds& thresholds, const PrefillOptions& options = {});

struct Metrics
{
  double density = 0.0;
  double mean_head_density = 0.0;
  PatternCounts counts;
  std::size_t heads = 0;
  /// Percentiles of rel_error over heads that recorded one.
  std::optional<double> rel_error_p50;
  std::optional<double> rel_error_p90;
  std::optional<double> rel_error_max;
};

Metrics compute_metrics(const RunTrace& trace);

/// Checks the trace-level invariants: counts sum to layers x heads, every
/// density lies in (0, 1], dense seeds have density 1, noise-cluster heads
/// never share, and at most one dense seed per cluster. Returns one message
/// per violation; empty means the trace is consistent.
std::vector<std::string> trace_violations(const RunTrace& trace, const HeadDict& head_dict);

/// Trace as versioned JSON. Timing fields are omitted when
/// `include_timings` is false, which makes equal runs compare equal.
std::string trace_to_json(const RunTrace& trace, bool include_timings = true);
void save_trace(const RunTrace& trace, const std::string& path);
}  // namespace shareprefill
