#include "shareprefill/attention.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <thread>
#include <vector>

#include "shareprefill/errors.hpp"

namespace shareprefill
{
namespace
{
template <typename T>
Matrix<T> transpose(const Matrix<T>& m)
{
  Matrix<T> out(m.cols(), m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r)
  {
    for (std::size_t c = 0; c < m.cols(); ++c)
    {
      out(c, r) = m(r, c);
    }
  }
  return out;
}

void check_mask_shape(std::size_t tokens, const BlockMask& mask)
{
  if (mask.tokens() != tokens || mask.block_size() == 0)
  {
    throw InvalidInput("mask covers " + std::to_string(mask.tokens()) + " tokens but input has " +
                       std::to_string(tokens));
  }
}

// Attention for one query row over keys [0, limit). `penalty_for(c)` returns
// the amount subtracted from score c, or +inf to drop it.
template <typename T, typename Penalty>
void attend_row(const AttentionInput<T>& input, const Matrix<T>& keys_t, std::size_t row,
                std::size_t limit, Penalty penalty_for, std::vector<T>& scores,
                std::vector<double>& weights, std::vector<T>& acc, std::span<T> out)
{
  const std::size_t d = input.head_dim();
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d)));
  const auto q = input.q.row(row);

  std::fill_n(scores.begin(), limit, T{0});
  for (std::size_t x = 0; x < d; ++x)
  {
    const T qx = q[x];
    const T* kt = keys_t.row(x).data();
    for (std::size_t c = 0; c < limit; ++c)
    {
      scores[c] += qx * kt[c];
    }
  }

  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < limit; ++c)
  {
    const double penalty = penalty_for(c);
    if (std::isinf(penalty))
    {
      weights[c] = -std::numeric_limits<double>::infinity();
      continue;
    }
    weights[c] = static_cast<double>(scores[c] * scale) - penalty;
    best = std::max(best, weights[c]);
  }
  if (std::isinf(best))
  {
    throw DegenerateMask("query row " + std::to_string(row) + " has no attendable key");
  }

  double normalizer = 0.0;
  std::fill(acc.begin(), acc.end(), T{0});
  for (std::size_t c = 0; c < limit; ++c)
  {
    if (std::isinf(weights[c]))
    {
      continue;
    }
    const double p = std::exp(weights[c] - best);
    normalizer += p;
    const T pt = static_cast<T>(p);
    const auto v = input.v.row(c);
    for (std::size_t x = 0; x < d; ++x)
    {
      acc[x] += pt * v[x];
    }
  }
  for (std::size_t x = 0; x < d; ++x)
  {
    out[x] = static_cast<T>(static_cast<double>(acc[x]) / normalizer);
  }
}

template <typename T, typename Penalty>
Matrix<T> row_wise_attention(const AttentionInput<T>& input, Penalty penalty_for)
{
  const std::size_t n = input.tokens();
  const std::size_t d = input.head_dim();
  const Matrix<T> keys_t = transpose(input.k);
  Matrix<T> out(n, d);
  std::vector<T> scores(n);
  std::vector<double> weights(n);
  std::vector<T> acc(d);
  for (std::size_t i = 0; i < n; ++i)
  {
    const std::size_t limit = input.causal ? i + 1 : n;
    attend_row(
        input, keys_t, i, limit, [&](std::size_t c) { return penalty_for(i, c); }, scores,
        weights, acc, out.row(i));
  }
  return out;
}

// Processes one query row block of the tiled kernel. Returns the number of
// computed tiles.
template <typename T>
std::size_t sparse_row_block(const AttentionInput<T>& input, const Matrix<T>& keys_t,
                             const BlockMask& mask, std::size_t qb, Matrix<T>& out,
                             BlockScoreMap& stats)
{
  const std::size_t n = input.tokens();
  const std::size_t d = input.head_dim();
  const std::size_t bs = mask.block_size();
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d)));

  const std::size_t r0 = qb * bs;
  const std::size_t br = std::min(bs, n - r0);

  std::vector<T> row_max(br, -std::numeric_limits<T>::infinity());
  std::vector<double> normalizer(br, 0.0);
  std::vector<T> acc(br * d, T{0});
  std::vector<T> tile(br * bs);
  std::vector<T> probs(bs);

  const std::size_t last_kb = input.causal ? qb : mask.key_blocks() - 1;
  std::size_t computed = 0;
  for (std::size_t kb = 0; kb <= last_kb; ++kb)
  {
    if (!mask.get(qb, kb))
    {
      continue;
    }
    ++computed;
    const std::size_t c0 = kb * bs;
    const std::size_t bc = std::min(bs, n - c0);
    const bool diagonal = input.causal && kb == qb;

    for (std::size_t r = 0; r < br; ++r)
    {
      T* s = tile.data() + r * bs;
      std::fill_n(s, bc, T{0});
      const auto q = input.q.row(r0 + r);
      for (std::size_t x = 0; x < d; ++x)
      {
        const T qx = q[x];
        const T* kt = keys_t.row(x).data() + c0;
        for (std::size_t c = 0; c < bc; ++c)
        {
          s[c] += qx * kt[c];
        }
      }
      for (std::size_t c = 0; c < bc; ++c)
      {
        s[c] *= scale;
      }
    }

    double block_sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t r = 0; r < br; ++r)
    {
      const T* s = tile.data() + r * bs;
      const std::size_t valid = diagonal ? r + 1 : bc;

      T tile_max = -std::numeric_limits<T>::infinity();
      for (std::size_t c = 0; c < valid; ++c)
      {
        block_sum += static_cast<double>(s[c]);
        tile_max = std::max(tile_max, s[c]);
      }
      pairs += valid;

      const T new_max = std::max(row_max[r], tile_max);
      const T rescale = std::isinf(row_max[r]) ? T{0} : std::exp(row_max[r] - new_max);
      double tile_sum = 0.0;
      for (std::size_t c = 0; c < valid; ++c)
      {
        probs[c] = std::exp(s[c] - new_max);
        tile_sum += static_cast<double>(probs[c]);
      }
      normalizer[r] = normalizer[r] * static_cast<double>(rescale) + tile_sum;
      row_max[r] = new_max;

      T* a = acc.data() + r * d;
      if (rescale != T{1})
      {
        for (std::size_t x = 0; x < d; ++x)
        {
          a[x] *= rescale;
        }
      }
      for (std::size_t c = 0; c < valid; ++c)
      {
        const T p = probs[c];
        const auto v = input.v.row(c0 + c);
        for (std::size_t x = 0; x < d; ++x)
        {
          a[x] += p * v[x];
        }
      }
    }
    stats.set(qb, kb, block_sum / static_cast<double>(pairs));
  }

  for (std::size_t r = 0; r < br; ++r)
  {
    auto o = out.row(r0 + r);
    const T* a = acc.data() + r * d;
    for (std::size_t x = 0; x < d; ++x)
    {
      o[x] = static_cast<T>(static_cast<double>(a[x]) / normalizer[r]);
    }
  }
  return computed;
}
}  // namespace

template <typename T>
void AttentionInput<T>::validate() const
{
  if (q.rows() == 0 || q.cols() == 0)
  {
    throw InvalidInput("attention input needs N >= 1 and d_h >= 1");
  }
  if (k.rows() != q.rows() || k.cols() != q.cols() || v.rows() != q.rows() ||
      v.cols() != q.cols())
  {
    throw InvalidInput("Q, K and V must share shape N x d_h");
  }
  for (const Matrix<T>* m : {&q, &k, &v})
  {
    for (const T value : m->data())
    {
      if (!std::isfinite(value))
      {
        throw InvalidInput("attention input contains a non-finite entry");
      }
    }
  }
}

std::size_t reachable_block_total(std::size_t tokens, std::size_t block_size, bool causal)
{
  const std::size_t n = block_count(tokens, block_size);
  return causal ? causal_block_total(n) : n * n;
}

template <typename T>
Matrix<T> dense_attention(const AttentionInput<T>& input)
{
  input.validate();
  return row_wise_attention(input, [](std::size_t, std::size_t) { return 0.0; });
}

template <typename T>
Matrix<T> masked_dense_attention(const AttentionInput<T>& input, const BlockMask& mask,
                                 double penalty)
{
  input.validate();
  check_mask_shape(input.tokens(), mask);
  if (!(penalty > 0.0))
  {
    throw InvalidInput("mask penalty must be positive");
  }
  const std::size_t bs = mask.block_size();
  return row_wise_attention(input, [&](std::size_t i, std::size_t j) {
    return mask.get(i / bs, j / bs) ? 0.0 : penalty;
  });
}

template <typename T>
SparseAttentionOutput<T> sparse_attention(const AttentionInput<T>& input, const BlockMask& mask,
                                          unsigned threads)
{
  input.validate();
  check_mask_shape(input.tokens(), mask);

  const std::size_t blocks = mask.query_blocks();
  for (std::size_t qb = 0; qb < blocks; ++qb)
  {
    const std::size_t last = input.causal ? qb : blocks - 1;
    bool any = false;
    for (std::size_t kb = 0; kb <= last && !any; ++kb)
    {
      any = mask.get(qb, kb);
    }
    if (!any)
    {
      throw DegenerateMask("query block " + std::to_string(qb) +
                           " has no computed key block; sanitize the mask first");
    }
  }

  SparseAttentionOutput<T> result{Matrix<T>(input.tokens(), input.head_dim()),
                                  BlockScoreMap(input.tokens(), mask.block_size()), 0,
                                  reachable_block_total(input.tokens(), mask.block_size(),
                                                        input.causal)};
  const Matrix<T> keys_t = transpose(input.k);
  std::vector<std::size_t> computed(blocks, 0);

  const unsigned workers = std::max(1u, std::min<unsigned>(threads, blocks));
  auto run = [&](unsigned worker) {
    for (std::size_t qb = worker; qb < blocks; qb += workers)
    {
      computed[qb] = sparse_row_block(input, keys_t, mask, qb, result.output, result.stats);
    }
  };
  if (workers == 1)
  {
    run(0);
  }
  else
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w)
    {
      pool.emplace_back(run, w);
    }
  }
  for (const auto c : computed)
  {
    result.computed_blocks += c;
  }
  return result;
}

template <typename T>
BlockScoreMap block_mean_scores(const AttentionInput<T>& input, std::size_t block_size)
{
  input.validate();
  if (block_size == 0)
  {
    throw InvalidInput("block_size must be positive");
  }
  const std::size_t n = input.tokens();
  const std::size_t d = input.head_dim();
  const long double scale = 1.0L / std::sqrt(static_cast<long double>(d));
  BlockScoreMap map(n, block_size);
  const std::size_t blocks = map.query_blocks();
  for (std::size_t qb = 0; qb < blocks; ++qb)
  {
    const std::size_t last = input.causal ? qb : blocks - 1;
    for (std::size_t kb = 0; kb <= last; ++kb)
    {
      long double sum = 0.0L;
      std::size_t pairs = 0;
      for (std::size_t i = qb * block_size; i < std::min(n, (qb + 1) * block_size); ++i)
      {
        for (std::size_t j = kb * block_size; j < std::min(n, (kb + 1) * block_size); ++j)
        {
          if (input.causal && j > i)
          {
            continue;
          }
          long double dot = 0.0L;
          for (std::size_t x = 0; x < d; ++x)
          {
            dot += static_cast<long double>(input.q(i, x)) * static_cast<long double>(input.k(j, x));
          }
          sum += dot * scale;
          ++pairs;
        }
      }
      map.set(qb, kb, static_cast<double>(sum / static_cast<long double>(pairs)));
    }
  }
  return map;
}

template <typename T>
void visit_attention_rows(const AttentionInput<T>& input,
                          const std::function<void(std::size_t, std::span<const double>)>& visit)
{
  input.validate();
  const std::size_t n = input.tokens();
  const std::size_t d = input.head_dim();
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d)));
  const Matrix<T> keys_t = transpose(input.k);
  std::vector<T> scores(n);
  std::vector<double> probs(n);
  for (std::size_t i = 0; i < n; ++i)
  {
    const std::size_t limit = input.causal ? i + 1 : n;
    std::fill_n(scores.begin(), limit, T{0});
    const auto q = input.q.row(i);
    for (std::size_t x = 0; x < d; ++x)
    {
      const T qx = q[x];
      const T* kt = keys_t.row(x).data();
      for (std::size_t c = 0; c < limit; ++c)
      {
        scores[c] += qx * kt[c];
      }
    }
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < limit; ++c)
    {
      probs[c] = static_cast<double>(scores[c] * scale);
      best = std::max(best, probs[c]);
    }
    double total = 0.0;
    for (std::size_t c = 0; c < limit; ++c)
    {
      probs[c] = std::exp(probs[c] - best);
      total += probs[c];
    }
    for (std::size_t c = 0; c < limit; ++c)
    {
      probs[c] /= total;
    }
    visit(i, std::span<const double>(probs.data(), limit));
  }
}

#define SHAREPREFILL_INSTANTIATE(T)                                                          \
  template struct AttentionInput<T>;                                                         \
  template Matrix<T> dense_attention<T>(const AttentionInput<T>&);                           \
  template Matrix<T> masked_dense_attention<T>(const AttentionInput<T>&, const BlockMask&,   \
                                               double);                                      \
  template SparseAttentionOutput<T> sparse_attention<T>(const AttentionInput<T>&,            \
                                                        const BlockMask&, unsigned);         \
  template BlockScoreMap block_mean_scores<T>(const AttentionInput<T>&, std::size_t);     \
  template void visit_attention_rows<T>(                                                     \
      const AttentionInput<T>&, const std::function<void(std::size_t, std::span<const double>)>&);

SHAREPREFILL_INSTANTIATE(float)
SHAREPREFILL_INSTANTIATE(double)

#undef SHAREPREFILL_INSTANTIATE
}  // namespace shareprefill
