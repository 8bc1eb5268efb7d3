#pragma once

#include <cstddef>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include "shareprefill/attention.hpp"
#include "shareprefill/block_grid.hpp"
#include "shareprefill/head_dict.hpp"

namespace shareprefill
{
/// Nonnegative vector summing to 1 (within 1e-6). Construction validates.
class ProbVector
{
public:
  static constexpr double kTolerance = 1e-6;

  ProbVector() = default;
  /// Throws InvalidInput on negative/non-finite entries or bad total mass.
  explicit ProbVector(std::vector<double> values);

  static ProbVector uniform(std::size_t n);
  /// Scales `weights` to unit mass. Throws EmptyDistribution on zero mass.
  static ProbVector normalized(std::vector<double> weights);

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const { return values_; }

  bool operator==(const ProbVector&) const = default;

private:
  std::vector<double> values_;
};

/// Cumulative-attention (gamma), similarity (tau) and sparsity (delta)
/// thresholds. delta above 1 is the "never exclude" sentinel.
struct Thresholds
{
  static constexpr double kDeltaDisabled = 1.01;

  double gamma = 0.9;
  double tau = 0.2;
  double delta = 0.3;

  /// Throws InvalidInput naming the offending field.
  void validate() const;
};

/// A cluster's shared pattern: last-row block distribution plus its mask.
struct PivotalEntry
{
  ProbVector last_row;
  BlockMask mask;
};

/// Per-pass cluster id -> PivotalEntry store. Reads and writes are atomic
/// per entry.
class PivotalPatternDict
{
public:
  void clear();
  std::optional<PivotalEntry> find(int cluster) const;
  bool contains(int cluster) const;
  /// Inserts or overwrites.
  void update(int cluster, PivotalEntry entry);
  std::size_t size() const;

private:
  mutable std::mutex mutex_;
  std::map<int, PivotalEntry> entries_;
};

enum class PatternKind
{
  SharedPivot,
  VerticalSlash,
};

const char* to_string(PatternKind kind);

struct PatternDecision
{
  PatternKind kind = PatternKind::VerticalSlash;
  std::optional<double> d_sparse;
  std::optional<double> d_sim;
};

/// sqrt of the base-2 Jensen-Shannon divergence; lies in [0, 1].
double js_distance(const ProbVector& p, const ProbVector& q);

/// Indices of the fewest largest scores whose share of the total reaches
/// `gamma`, in descending score order (ties: smaller index first). Scores
/// are normalized internally. gamma == 1 returns every nonzero index.
std::vector<std::size_t> select_cumulative(std::span<const double> scores, double gamma);

/// Forces the diagonal and first-column blocks on. When `causal`, also
/// clears everything strictly above the diagonal. Idempotent.
BlockMask sanitize_mask(const BlockMask& mask, bool causal = true);

/// Row-wise softmax of the block means, scaled so the whole map sums to 1,
/// then cumulative selection at `gamma`. The mask is sanitized unless
/// `sanitize` is false. Throws InvalidInput when a reachable block was skipped.
PivotalEntry build_pivotal_entry(const BlockScoreMap& stats, double gamma, bool causal = true,
                                 bool sanitize = true);

/// Builds a pivotal pattern from a fully computed score map and stores it
/// under the head's cluster. Returns false (and leaves `dict` alone) when
/// the map has a skipped reachable block or the head is in the noise cluster.
bool construct_pivotal_pattern(const BlockScoreMap& stats, double gamma, std::size_t layer,
                               std::size_t head, const HeadDict& head_dict,
                               PivotalPatternDict& dict, bool causal = true);

/// softmax(pool(Q_last K^T) / sqrt(d_h)) where Q_last is the final
/// `block_size` query rows and pooling averages each key block.
template <typename T>
ProbVector estimate_last_block_distribution(const AttentionInput<T>& input,
                                            std::size_t block_size);

PatternDecision determine_sparse_pattern(const ProbVector& a_hat, std::size_t layer,
                                         std::size_t head, const HeadDict& head_dict,
                                         const PivotalPatternDict& dict,
                                         const Thresholds& thresholds);

/// The cluster's stored mask, or the full causal mask when the cluster has
/// no entry yet. Noise-cluster heads are a ContractViolation.
BlockMask share_pivotal_pattern(std::size_t layer, std::size_t head, const HeadDict& head_dict,
                                const PivotalPatternDict& dict, std::size_t tokens,
                                std::size_t block_size);

/// Block-granular vertical/slash search from the last query block.
template <typename T>
BlockMask search_vertical_slash(const AttentionInput<T>& input, double gamma,
                                std::size_t block_size);

/// Block-granular direction scores used by search_vertical_slash; exposed
/// for diagnostics and tests. `slash[o]` is the mass at block offset
/// (query block - key block) == o - (key_blocks - 1).
struct VerticalSlashScores
{
  std::vector<double> vertical;
  std::vector<double> slash;
};

template <typename T>
VerticalSlashScores vertical_slash_scores(const AttentionInput<T>& input, std::size_t block_size);

/// pool(Q) . pool(K) against the position-aligned mean of q_i * k_i for 1-d
/// per-token features. all_pairs_mean is the mean over every (i, j) pair,
/// which for 1-d features always equals pooled_product.
struct PoolingDiagnostic
{
  double pooled_product = 0.0;
  double true_block_mean = 0.0;
  double all_pairs_mean = 0.0;
};

PoolingDiagnostic pooling_estimate_diagnostic(std::span<const double> q, std::span<const double> k);
}  // namespace shareprefill
