#include "shareprefill/block_grid.hpp"

#include <stdexcept>

#include "shareprefill/errors.hpp"

namespace shareprefill
{
BlockMask::BlockMask(std::size_t tokens, std::size_t block_size)
    : tokens_(tokens), block_size_(block_size)
{
  if (tokens == 0 || block_size == 0)
  {
    throw InvalidInput("BlockMask: tokens and block_size must be positive");
  }
  blocks_ = block_count(tokens, block_size);
  bits_.assign(blocks_ * blocks_, 0);
}

BlockMask BlockMask::empty(std::size_t tokens, std::size_t block_size)
{
  return BlockMask(tokens, block_size);
}

BlockMask BlockMask::full_causal(std::size_t tokens, std::size_t block_size)
{
  BlockMask mask(tokens, block_size);
  for (std::size_t i = 0; i < mask.blocks_; ++i)
  {
    for (std::size_t j = 0; j <= i; ++j)
    {
      mask.set(i, j);
    }
  }
  return mask;
}

BlockMask BlockMask::full(std::size_t tokens, std::size_t block_size)
{
  BlockMask mask(tokens, block_size);
  mask.bits_.assign(mask.bits_.size(), 1);
  return mask;
}

std::size_t BlockMask::popcount() const
{
  std::size_t count = 0;
  for (const auto bit : bits_)
  {
    count += bit;
  }
  return count;
}

std::size_t BlockMask::causal_popcount() const
{
  std::size_t count = 0;
  for (std::size_t i = 0; i < blocks_; ++i)
  {
    for (std::size_t j = 0; j <= i; ++j)
    {
      count += bits_[i * blocks_ + j];
    }
  }
  return count;
}

double BlockMask::causal_density() const
{
  return static_cast<double>(causal_popcount()) /
         static_cast<double>(causal_block_total(blocks_));
}

BlockScoreMap::BlockScoreMap(std::size_t tokens, std::size_t block_size)
    : tokens_(tokens), block_size_(block_size)
{
  if (tokens == 0 || block_size == 0)
  {
    throw InvalidInput("BlockScoreMap: tokens and block_size must be positive");
  }
  blocks_ = block_count(tokens, block_size);
  values_.assign(blocks_ * blocks_, kSkipped);
}

bool BlockScoreMap::fully_computed(bool causal) const
{
  if (blocks_ == 0)
  {
    return false;
  }
  for (std::size_t i = 0; i < blocks_; ++i)
  {
    const std::size_t last = causal ? i : blocks_ - 1;
    for (std::size_t j = 0; j <= last; ++j)
    {
      if (!computed(i, j))
      {
        return false;
      }
    }
  }
  return true;
}
}  // namespace shareprefill
