#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <limits>

#include "shareprefill/block_grid.hpp"
#include "shareprefill/matrix.hpp"

namespace shareprefill
{
/// Per-head attention operands. Q, K and V are N x d_h.
template <typename T>
struct AttentionInput
{
  Matrix<T> q;
  Matrix<T> k;
  Matrix<T> v;
  bool causal = true;

  std::size_t tokens() const { return q.rows(); }
  std::size_t head_dim() const { return q.cols(); }

  /// Throws InvalidInput unless shapes agree, N >= 1, d_h >= 1 and every
  /// entry is finite.
  void validate() const;
};

template <typename T>
struct SparseAttentionOutput
{
  Matrix<T> output;
  BlockScoreMap stats;
  std::size_t computed_blocks = 0;
  std::size_t total_causal_blocks = 0;

  double density() const
  {
    return static_cast<double>(computed_blocks) / static_cast<double>(total_causal_blocks);
  }
};

/// Hard-exclusion value for masked_dense_attention.
inline constexpr double kHardExclusion = std::numeric_limits<double>::infinity();

/// softmax(Q K^T / sqrt(d_h)) V, one query row at a time. Causal rows only
/// see keys at positions <= the row index. The N x N score matrix is never
/// held in memory.
template <typename T>
Matrix<T> dense_attention(const AttentionInput<T>& input);

/// Dense attention with `penalty` subtracted from every score whose block
/// bit is 0. Passing kHardExclusion drops those scores entirely.
template <typename T>
Matrix<T> masked_dense_attention(const AttentionInput<T>& input, const BlockMask& mask,
                                 double penalty);

/// Tiled block-sparse attention with online softmax rescaling.
///
/// Only tiles whose mask bit is set (and that are causally reachable) are
/// visited. For each visited tile the mean scaled score over its valid
/// token pairs is written to `stats`; every other cell holds
/// BlockScoreMap::kSkipped. Query row blocks are independent, so `threads`
/// only changes scheduling; results are bitwise identical for any value.
///
/// Throws DegenerateMask if some query row block has no reachable set bit.
template <typename T>
SparseAttentionOutput<T> sparse_attention(const AttentionInput<T>& input, const BlockMask& mask,
                                          unsigned threads = 1);

/// Brute-force block means of Q K^T / sqrt(d_h) in long double. Diagonal
/// blocks average only lower-triangular pairs when causal; cells above the
/// causal diagonal hold kSkipped.
template <typename T>
BlockScoreMap block_mean_scores(const AttentionInput<T>& input, std::size_t block_size);

/// Calls `visit(row, probs)` with the dense softmax row of every query.
/// `probs` covers keys [0, row] when causal and [0, N) otherwise.
template <typename T>
void visit_attention_rows(const AttentionInput<T>& input,
                          const std::function<void(std::size_t, std::span<const double>)>& visit);

/// Count of reachable blocks for an input of this shape.
std::size_t reachable_block_total(std::size_t tokens, std::size_t block_size, bool causal);
}  // namespace shareprefill
