#include "shareprefill/pattern.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "shareprefill/errors.hpp"

namespace shareprefill
{
namespace
{
// 0 * log 0 = 0.
double kl_term(double p, double m)
{
  return p > 0.0 ? p * std::log2(p / m) : 0.0;
}

std::vector<double> softmax(std::span<const double> logits)
{
  const double best = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i)
  {
    out[i] = std::exp(logits[i] - best);
    total += out[i];
  }
  for (auto& v : out)
  {
    v /= total;
  }
  return out;
}
}  // namespace

ProbVector::ProbVector(std::vector<double> values) : values_(std::move(values))
{
  if (values_.empty())
  {
    throw InvalidInput("probability vector must be non-empty");
  }
  double total = 0.0;
  for (const double v : values_)
  {
    if (!std::isfinite(v) || v < 0.0)
    {
      throw InvalidInput("probability vector entries must be finite and nonnegative");
    }
    total += v;
  }
  if (std::abs(total - 1.0) > kTolerance)
  {
    throw InvalidInput("probability vector sums to " + std::to_string(total) + ", expected 1");
  }
}

ProbVector ProbVector::uniform(std::size_t n)
{
  if (n == 0)
  {
    throw InvalidInput("uniform distribution needs at least one cell");
  }
  return ProbVector(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

ProbVector ProbVector::normalized(std::vector<double> weights)
{
  double total = 0.0;
  for (const double w : weights)
  {
    if (!std::isfinite(w) || w < 0.0)
    {
      throw InvalidInput("weights must be finite and nonnegative");
    }
    total += w;
  }
  if (!(total > 0.0))
  {
    throw EmptyDistribution("cannot normalize a zero-mass weight vector");
  }
  for (auto& w : weights)
  {
    w /= total;
  }
  return ProbVector(std::move(weights));
}

void Thresholds::validate() const
{
  if (!(gamma > 0.0 && gamma <= 1.0))
  {
    throw InvalidInput("gamma must lie in (0, 1], got " + std::to_string(gamma));
  }
  if (!(tau >= 0.0 && tau <= 1.0))
  {
    throw InvalidInput("tau must lie in [0, 1], got " + std::to_string(tau));
  }
  if (!(delta >= 0.0 && delta <= kDeltaDisabled))
  {
    throw InvalidInput("delta must lie in [0, 1.01], got " + std::to_string(delta));
  }
}

void PivotalPatternDict::clear()
{
  std::scoped_lock lock(mutex_);
  entries_.clear();
}

std::optional<PivotalEntry> PivotalPatternDict::find(int cluster) const
{
  std::scoped_lock lock(mutex_);
  const auto it = entries_.find(cluster);
  if (it == entries_.end())
  {
    return std::nullopt;
  }
  return it->second;
}

bool PivotalPatternDict::contains(int cluster) const
{
  std::scoped_lock lock(mutex_);
  return entries_.contains(cluster);
}

void PivotalPatternDict::update(int cluster, PivotalEntry entry)
{
  std::scoped_lock lock(mutex_);
  entries_.insert_or_assign(cluster, std::move(entry));
}

std::size_t PivotalPatternDict::size() const
{
  std::scoped_lock lock(mutex_);
  return entries_.size();
}

const char* to_string(PatternKind kind)
{
  switch (kind)
  {
    case PatternKind::SharedPivot:
      return "shared_pivot";
    case PatternKind::VerticalSlash:
      return "vertical_slash";
  }
  return "unknown";
}

double js_distance(const ProbVector& p, const ProbVector& q)
{
  if (p.size() != q.size())
  {
    throw InvalidInput("js_distance: length mismatch (" + std::to_string(p.size()) + " vs " +
                       std::to_string(q.size()) + ")");
  }
  double divergence = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
  {
    const double m = 0.5 * (p[i] + q[i]);
    divergence += 0.5 * kl_term(p[i], m) + 0.5 * kl_term(q[i], m);
  }
  return std::sqrt(std::clamp(divergence, 0.0, 1.0));
}

std::vector<std::size_t> select_cumulative(std::span<const double> scores, double gamma)
{
  if (!(gamma > 0.0 && gamma <= 1.0))
  {
    throw InvalidInput("select_cumulative: gamma must lie in (0, 1]");
  }
  long double total = 0.0L;
  for (const double s : scores)
  {
    if (!std::isfinite(s) || s < 0.0)
    {
      throw InvalidInput("select_cumulative: scores must be finite and nonnegative");
    }
    total += s;
  }
  if (!(total > 0.0L))
  {
    throw EmptyDistribution("select_cumulative: all scores are zero");
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  // Absorbs rounding in the running sum so that e.g. 0.5+0.3+0.1 meets 0.9.
  constexpr long double kSlack = 1e-12L;
  std::vector<std::size_t> selected;
  long double covered = 0.0L;
  for (const std::size_t idx : order)
  {
    if (scores[idx] == 0.0)
    {
      break;
    }
    selected.push_back(idx);
    covered += static_cast<long double>(scores[idx]) / total;
    if (gamma < 1.0 && covered >= static_cast<long double>(gamma) - kSlack)
    {
      break;
    }
  }
  return selected;
}

BlockMask sanitize_mask(const BlockMask& mask, bool causal)
{
  BlockMask out = mask;
  const std::size_t n = out.query_blocks();
  for (std::size_t i = 0; i < n; ++i)
  {
    out.set(i, i);
    out.set(i, 0);
    if (causal)
    {
      for (std::size_t j = i + 1; j < n; ++j)
      {
        out.set(i, j, false);
      }
    }
  }
  return out;
}

PivotalEntry build_pivotal_entry(const BlockScoreMap& stats, double gamma, bool causal,
                                 bool sanitize)
{
  if (!stats.fully_computed(causal))
  {
    throw InvalidInput("pivotal pattern needs a fully computed score map");
  }
  const std::size_t n = stats.query_blocks();
  std::vector<double> flat(n * n, 0.0);
  std::vector<double> last_row;
  for (std::size_t i = 0; i < n; ++i)
  {
    const std::size_t reach = causal ? i + 1 : n;
    std::vector<double> logits(reach);
    for (std::size_t j = 0; j < reach; ++j)
    {
      logits[j] = stats.get(i, j);
    }
    const auto row = softmax(logits);
    for (std::size_t j = 0; j < reach; ++j)
    {
      flat[i * n + j] = row[j] / static_cast<double>(n);
    }
    if (i + 1 == n)
    {
      last_row.assign(n, 0.0);
      std::copy(row.begin(), row.end(), last_row.begin());
    }
  }

  BlockMask mask(stats.tokens(), stats.block_size());
  for (const std::size_t idx : select_cumulative(flat, gamma))
  {
    mask.set(idx / n, idx % n);
  }
  return PivotalEntry{ProbVector::normalized(std::move(last_row)),
                      sanitize ? sanitize_mask(mask, causal) : std::move(mask)};
}

bool construct_pivotal_pattern(const BlockScoreMap& stats, double gamma, std::size_t layer,
                               std::size_t head, const HeadDict& head_dict,
                               PivotalPatternDict& dict, bool causal)
{
  if (!stats.fully_computed(causal))
  {
    return false;
  }
  const int cluster = head_dict.cluster_of(layer, head);
  if (cluster == head_dict.noise_cluster_id())
  {
    return false;
  }
  dict.update(cluster, build_pivotal_entry(stats, gamma, causal));
  return true;
}

template <typename T>
ProbVector estimate_last_block_distribution(const AttentionInput<T>& input,
                                            std::size_t block_size)
{
  input.validate();
  if (block_size == 0)
  {
    throw InvalidInput("block_size must be positive");
  }
  const std::size_t n = input.tokens();
  const std::size_t d = input.head_dim();
  const std::size_t rows = std::min(block_size, n);
  const std::size_t blocks = block_count(n, block_size);

  // mean_{r,c} q_r . k_c == mean(q) . mean(k) over the block.
  std::vector<double> q_mean(d, 0.0);
  for (std::size_t r = n - rows; r < n; ++r)
  {
    for (std::size_t x = 0; x < d; ++x)
    {
      q_mean[x] += static_cast<double>(input.q(r, x));
    }
  }
  for (auto& v : q_mean)
  {
    v /= static_cast<double>(rows);
  }

  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> pooled(blocks, 0.0);
  for (std::size_t kb = 0; kb < blocks; ++kb)
  {
    const std::size_t c0 = kb * block_size;
    const std::size_t c1 = std::min(n, c0 + block_size);
    std::vector<double> k_mean(d, 0.0);
    for (std::size_t c = c0; c < c1; ++c)
    {
      for (std::size_t x = 0; x < d; ++x)
      {
        k_mean[x] += static_cast<double>(input.k(c, x));
      }
    }
    double dot = 0.0;
    for (std::size_t x = 0; x < d; ++x)
    {
      dot += q_mean[x] * k_mean[x];
    }
    pooled[kb] = dot / static_cast<double>(c1 - c0) * scale;
  }
  return ProbVector(softmax(pooled));
}

PatternDecision determine_sparse_pattern(const ProbVector& a_hat, std::size_t layer,
                                         std::size_t head, const HeadDict& head_dict,
                                         const PivotalPatternDict& dict,
                                         const Thresholds& thresholds)
{
  const int cluster = head_dict.cluster_of(layer, head);
  PatternDecision decision;
  decision.d_sparse = js_distance(a_hat, ProbVector::uniform(a_hat.size()));

  if (cluster == head_dict.noise_cluster_id() || *decision.d_sparse >= thresholds.delta)
  {
    decision.kind = PatternKind::VerticalSlash;
    return decision;
  }
  const auto entry = dict.find(cluster);
  if (!entry)
  {
    decision.kind = PatternKind::SharedPivot;
    return decision;
  }
  decision.d_sim = js_distance(a_hat, entry->last_row);
  decision.kind = *decision.d_sim < thresholds.tau ? PatternKind::SharedPivot
                                                   : PatternKind::VerticalSlash;
  return decision;
}

BlockMask share_pivotal_pattern(std::size_t layer, std::size_t head, const HeadDict& head_dict,
                                const PivotalPatternDict& dict, std::size_t tokens,
                                std::size_t block_size)
{
  const int cluster = head_dict.cluster_of(layer, head);
  if (cluster == head_dict.noise_cluster_id())
  {
    throw ContractViolation("noise-cluster head (" + std::to_string(layer) + ", " +
                            std::to_string(head) + ") cannot share a pivotal pattern");
  }
  if (const auto entry = dict.find(cluster))
  {
    if (entry->mask.tokens() != tokens || entry->mask.block_size() != block_size)
    {
      throw ContractViolation("pivotal pattern for cluster " + std::to_string(cluster) +
                              " has a different shape than the current input");
    }
    return entry->mask;
  }
  return BlockMask::full_causal(tokens, block_size);
}

template <typename T>
VerticalSlashScores vertical_slash_scores(const AttentionInput<T>& input, std::size_t block_size)
{
  input.validate();
  if (block_size == 0)
  {
    throw InvalidInput("block_size must be positive");
  }
  const std::size_t n = input.tokens();
  const std::size_t d = input.head_dim();
  const std::size_t blocks = block_count(n, block_size);
  const std::size_t rows = std::min(block_size, n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));

  VerticalSlashScores out{std::vector<double>(blocks, 0.0),
                          std::vector<double>(2 * blocks - 1, 0.0)};
  std::vector<double> logits;
  for (std::size_t i = n - rows; i < n; ++i)
  {
    const std::size_t limit = input.causal ? i + 1 : n;
    logits.assign(limit, 0.0);
    for (std::size_t c = 0; c < limit; ++c)
    {
      double dot = 0.0;
      for (std::size_t x = 0; x < d; ++x)
      {
        dot += static_cast<double>(input.q(i, x)) * static_cast<double>(input.k(c, x));
      }
      logits[c] = dot * scale;
    }
    const auto probs = softmax(logits);
    const std::size_t qb = i / block_size;
    for (std::size_t c = 0; c < limit; ++c)
    {
      const std::size_t kb = c / block_size;
      out.vertical[kb] += probs[c];
      out.slash[qb + (blocks - 1) - kb] += probs[c];
    }
  }
  for (auto* v : {&out.vertical, &out.slash})
  {
    const double total = std::accumulate(v->begin(), v->end(), 0.0);
    for (auto& x : *v)
    {
      x /= total;
    }
  }
  return out;
}

template <typename T>
BlockMask search_vertical_slash(const AttentionInput<T>& input, double gamma,
                                std::size_t block_size)
{
  const auto scores = vertical_slash_scores(input, block_size);
  const std::size_t n = scores.vertical.size();
  BlockMask mask(input.tokens(), block_size);

  for (const std::size_t kb : select_cumulative(scores.vertical, gamma))
  {
    for (std::size_t qb = input.causal ? kb : 0; qb < n; ++qb)
    {
      mask.set(qb, kb);
    }
  }
  for (const std::size_t s : select_cumulative(scores.slash, gamma))
  {
    // Block offset qb - kb.
    const auto offset = static_cast<std::ptrdiff_t>(s) - static_cast<std::ptrdiff_t>(n - 1);
    for (std::size_t qb = 0; qb < n; ++qb)
    {
      const auto kb = static_cast<std::ptrdiff_t>(qb) - offset;
      if (kb >= 0 && kb < static_cast<std::ptrdiff_t>(n) &&
          (!input.causal || kb <= static_cast<std::ptrdiff_t>(qb)))
      {
        mask.set(qb, static_cast<std::size_t>(kb));
      }
    }
  }
  return sanitize_mask(mask, input.causal);
}

PoolingDiagnostic pooling_estimate_diagnostic(std::span<const double> q, std::span<const double> k)
{
  if (q.size() != k.size() || q.empty())
  {
    throw InvalidInput("pooling diagnostic needs equal, non-zero token counts");
  }
  const double count = static_cast<double>(q.size());
  PoolingDiagnostic out;
  double q_sum = 0.0;
  double k_sum = 0.0;
  double aligned = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i)
  {
    q_sum += q[i];
    k_sum += k[i];
    aligned += q[i] * k[i];
    for (std::size_t j = 0; j < k.size(); ++j)
    {
      pairs += q[i] * k[j];
    }
  }
  out.pooled_product = (q_sum / count) * (k_sum / count);
  out.true_block_mean = aligned / count;
  out.all_pairs_mean = pairs / (count * count);
  return out;
}

template ProbVector estimate_last_block_distribution<float>(const AttentionInput<float>&,
                                                            std::size_t);
template ProbVector estimate_last_block_distribution<double>(const AttentionInput<double>&,
                                                             std::size_t);
template VerticalSlashScores vertical_slash_scores<float>(const AttentionInput<float>&,
                                                          std::size_t);
template VerticalSlashScores vertical_slash_scores<double>(const AttentionInput<double>&,
                                                           std::size_t);
template BlockMask search_vertical_slash<float>(const AttentionInput<float>&, double,
                                                std::size_t);
template BlockMask search_vertical_slash<double>(const AttentionInput<double>&, double,
                                                 std::size_t);
}  // namespace shareprefill
