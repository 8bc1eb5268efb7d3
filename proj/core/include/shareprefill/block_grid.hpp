#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

namespace shareprefill
{
/// Number of blocks needed to cover `tokens` tokens.
inline std::size_t block_count(std::size_t tokens, std::size_t block_size)
{
  return (tokens + block_size - 1) / block_size;
}

/// Boolean grid over (query-block x key-block) space. A set bit means the
/// tile is computed by the block-sparse kernel.
///
/// The grid is square (ceil(N / block_size) on both axes). Nothing in this
/// class enforces the causal invariant; use sanitize_mask() for that.
class BlockMask
{
public:
  BlockMask() = default;
  BlockMask(std::size_t tokens, std::size_t block_size);

  /// All-zero mask.
  static BlockMask empty(std::size_t tokens, std::size_t block_size);
  /// Every block on or below the diagonal.
  static BlockMask full_causal(std::size_t tokens, std::size_t block_size);
  /// Every block, including those above the diagonal.
  static BlockMask full(std::size_t tokens, std::size_t block_size);

  std::size_t tokens() const { return tokens_; }
  std::size_t block_size() const { return block_size_; }
  std::size_t query_blocks() const { return blocks_; }
  std::size_t key_blocks() const { return blocks_; }

  bool get(std::size_t qb, std::size_t kb) const { return bits_[qb * blocks_ + kb] != 0; }
  void set(std::size_t qb, std::size_t kb, bool value = true)
  {
    bits_[qb * blocks_ + kb] = value ? 1 : 0;
  }

  /// Number of set bits anywhere in the grid.
  std::size_t popcount() const;
  /// Number of set bits on or below the diagonal.
  std::size_t causal_popcount() const;
  /// popcount restricted to the region reachable under the given causality.
  std::size_t reachable_popcount(bool causal) const
  {
    return causal ? causal_popcount() : popcount();
  }
  /// causal_popcount() / number of causal blocks.
  double causal_density() const;

  bool same_shape(const BlockMask& other) const
  {
    return tokens_ == other.tokens_ && block_size_ == other.block_size_;
  }

  bool operator==(const BlockMask&) const = default;

private:
  std::size_t tokens_ = 0;
  std::size_t block_size_ = 0;
  std::size_t blocks_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Number of blocks on or below the diagonal of an n x n block grid.
inline std::size_t causal_block_total(std::size_t blocks)
{
  return blocks * (blocks + 1) / 2;
}

/// Real grid of block-averaged scaled QK values. Skipped blocks hold
/// kSkipped, which no computed mean can equal.
class BlockScoreMap
{
public:
  static constexpr double kSkipped = -std::numeric_limits<double>::infinity();

  BlockScoreMap() = default;
  BlockScoreMap(std::size_t tokens, std::size_t block_size);

  std::size_t tokens() const { return tokens_; }
  std::size_t block_size() const { return block_size_; }
  std::size_t query_blocks() const { return blocks_; }
  std::size_t key_blocks() const { return blocks_; }

  double get(std::size_t qb, std::size_t kb) const { return values_[qb * blocks_ + kb]; }
  void set(std::size_t qb, std::size_t kb, double value) { values_[qb * blocks_ + kb] = value; }
  bool computed(std::size_t qb, std::size_t kb) const { return get(qb, kb) != kSkipped; }

  /// True when every reachable cell holds a computed mean.
  bool fully_computed(bool causal) const;

private:
  std::size_t tokens_ = 0;
  std::size_t block_size_ = 0;
  std::size_t blocks_ = 0;
  std::vector<double> values_;
};
}  // namespace shareprefill
