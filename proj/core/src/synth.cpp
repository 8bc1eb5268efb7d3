#include "shareprefill/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "shareprefill/errors.hpp"
#include "shareprefill/pattern.hpp"

namespace shareprefill
{
namespace
{
// Feature layout of a head vector: [sink, stripes, block code ...].
constexpr std::size_t kSinkDim = 0;
constexpr std::size_t kStripeDim = 1;
constexpr std::size_t kCodeOffset = 2;

using Rng = std::mt19937_64;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0)
{
  // splitmix64 finalizer over the combined words
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (a + 1) + 0xBF58476D1CE4E5B9ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Matrix<float> block_codes(std::size_t blocks, std::size_t head_dim, std::uint64_t seed)
{
  const std::size_t width = head_dim - kCodeOffset;
  Matrix<float> codes(blocks, width);
  Rng rng(mix_seed(seed, 0xC0DE));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t b = 0; b < blocks; ++b)
  {
    std::vector<double> v(width);
    double norm = 0.0;
    for (auto& x : v)
    {
      x = normal(rng);
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (std::size_t x = 0; x < width; ++x)
    {
      codes(b, x) = static_cast<float>(v[x] / norm);
    }
  }
  return codes;
}

bool is_stripe(std::size_t block, std::size_t period)
{
  return block != 0 && block % period == period / 2;
}

// Key blocks a query in `block` is steered towards by code features.
std::vector<std::size_t> code_targets(const TemplateSpec& t, std::size_t block)
{
  switch (t.kind)
  {
    case TemplateKind::Staircase:
      return {block - block % t.param};
    case TemplateKind::LocalBand:
    {
      std::vector<std::size_t> out;
      for (std::size_t w = 0; w < t.param && w <= block; ++w)
      {
        out.push_back(block - w);
      }
      return out;
    }
    case TemplateKind::Slash:
      return {block >= t.param ? block - t.param : block};
    case TemplateKind::Sink:
    case TemplateKind::VerticalStripes:
      return {};
  }
  return {};
}

constexpr double kReferenceTokens = 2048.0;

void fill_template_head(const TemplateSpec& t, double strength, const Matrix<float>& codes,
                        const ModelSpec& spec, double noise_amplitude, Rng& rng,
                        AttentionInput<float>& input)
{
  const std::size_t d = spec.head_dim;
  const double amplitude = std::sqrt(strength * std::sqrt(static_cast<double>(d)));
  const double sigma = noise_amplitude * amplitude / std::sqrt(static_cast<double>(d));
  std::normal_distribution<double> noise(0.0, sigma);

  for (std::size_t i = 0; i < spec.tokens; ++i)
  {
    const std::size_t block = i / spec.block_size;
    auto q = input.q.row(i);
    auto k = input.k.row(i);
    std::vector<double> qv(d, 0.0);
    std::vector<double> kv(d, 0.0);

    // Keys always carry their block code; only the query side decides
    // which blocks it favours.
    for (std::size_t x = 0; x < codes.cols(); ++x)
    {
      kv[kCodeOffset + x] = amplitude * codes(block, x);
    }
    switch (t.kind)
    {
      case TemplateKind::Sink:
        qv[kSinkDim] = amplitude;
        break;
      case TemplateKind::VerticalStripes:
        qv[kStripeDim] = amplitude;
        break;
      default:
        for (const std::size_t target : code_targets(t, block))
        {
          for (std::size_t x = 0; x < codes.cols(); ++x)
          {
            qv[kCodeOffset + x] += amplitude * codes(target, x);
          }
        }
        break;
    }
    if (block == 0)
    {
      kv[kSinkDim] = amplitude;
    }
    if (t.kind == TemplateKind::VerticalStripes && is_stripe(block, t.param))
    {
      kv[kStripeDim] = amplitude;
    }
    for (std::size_t x = 0; x < d; ++x)
    {
      q[x] = static_cast<float>(qv[x] + noise(rng));
      k[x] = static_cast<float>(kv[x] + noise(rng));
    }
  }
}

void fill_noise_head(Rng& rng, AttentionInput<float>& input)
{
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0));
  for (auto* m : {&input.q, &input.k})
  {
    for (auto& x : m->data())
    {
      x = static_cast<float>(normal(rng));
    }
  }
}
}  // namespace

const char* to_string(TemplateKind kind)
{
  switch (kind)
  {
    case TemplateKind::Sink:
      return "sink";
    case TemplateKind::Staircase:
      return "staircase";
    case TemplateKind::LocalBand:
      return "local_band";
    case TemplateKind::Slash:
      return "slash";
    case TemplateKind::VerticalStripes:
      return "vertical_stripes";
  }
  return "unknown";
}

TemplateKind template_kind_from_string(const std::string& name)
{
  for (const auto kind : {TemplateKind::Sink, TemplateKind::Staircase, TemplateKind::LocalBand,
                          TemplateKind::Slash, TemplateKind::VerticalStripes})
  {
    if (name == to_string(kind))
    {
      return kind;
    }
  }
  throw InvalidInput("unknown template kind '" + name + "'");
}

std::vector<TemplateSpec> default_templates(std::size_t count)
{
  static const std::vector<TemplateSpec> suite = {
      {TemplateKind::Sink, 0, 8.0},
      {TemplateKind::Staircase, 8, 6.0},
      {TemplateKind::LocalBand, 2, 5.0},
      {TemplateKind::Slash, 8, 6.0},
      {TemplateKind::VerticalStripes, 6, 6.0},
      {TemplateKind::Slash, 12, 6.0},
      {TemplateKind::VerticalStripes, 4, 6.0},
      {TemplateKind::Slash, 4, 6.0},
  };
  if (count == 0 || count > suite.size())
  {
    throw InvalidInput("default_templates: count must lie in [1, " +
                       std::to_string(suite.size()) + "]");
  }
  return {suite.begin(), suite.begin() + static_cast<std::ptrdiff_t>(count)};
}

void ModelSpec::validate() const
{
  if (layers == 0 || heads == 0 || head_dim == 0 || tokens == 0 || block_size == 0)
  {
    throw InvalidInput("model spec: layers, heads, head_dim, tokens and block_size must be positive");
  }
  if (tokens < block_size)
  {
    throw InvalidInput("model spec: tokens must be >= block_size");
  }
  if (head_dim < 8)
  {
    throw InvalidInput("model spec: head_dim must be >= 8 for the synthetic generator");
  }
  if (structure.templates.empty())
  {
    throw InvalidInput("model spec: at least one template is required");
  }
  if (structure.noise_heads > layers * heads)
  {
    throw InvalidInput("model spec: more noise heads than heads");
  }
  if (!(structure.noise_amplitude >= 0.0))
  {
    throw InvalidInput("model spec: noise_amplitude must be >= 0");
  }
  for (const auto& t : structure.templates)
  {
    const bool needs_param = t.kind == TemplateKind::Staircase ||
                             t.kind == TemplateKind::LocalBand ||
                             t.kind == TemplateKind::VerticalStripes;
    if (needs_param && t.param == 0)
    {
      throw InvalidInput(std::string("model spec: template '") + to_string(t.kind) +
                         "' needs a positive param");
    }
    if (!(t.strength > 0.0))
    {
      throw InvalidInput("model spec: template strength must be positive");
    }
  }
}

SyntheticModel synth_model_generate(const ModelSpec& spec)
{
  spec.validate();
  const std::size_t total = spec.layers * spec.heads;
  const std::size_t templates = spec.structure.templates.size();

  // Head -> template assignment: noise heads first, then round-robin over a
  // shuffled head order.
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng assign_rng(mix_seed(spec.structure.assignment_seed, 0xA551));
  std::shuffle(order.begin(), order.end(), assign_rng);
  std::vector<int> template_of(total, -1);
  for (std::size_t pos = spec.structure.noise_heads; pos < total; ++pos)
  {
    template_of[order[pos]] =
        static_cast<int>((pos - spec.structure.noise_heads) % templates);
  }

  const Matrix<float> codes =
      block_codes(block_count(spec.tokens, spec.block_size), spec.head_dim, spec.seed);

  SyntheticModel model{spec, {}, template_of};
  model.heads.reserve(total);
  for (std::size_t l = 0; l < spec.layers; ++l)
  {
    for (std::size_t h = 0; h < spec.heads; ++h)
    {
      const std::size_t idx = l * spec.heads + h;
      Rng rng(mix_seed(spec.seed, l + 1, h + 1));
      HeadAttention head{l, h,
                         AttentionInput<float>{Matrix<float>(spec.tokens, spec.head_dim),
                                               Matrix<float>(spec.tokens, spec.head_dim),
                                               Matrix<float>(spec.tokens, spec.head_dim), true}};
      if (template_of[idx] < 0)
      {
        fill_noise_head(rng, head.input);
      }
      else
      {
        const auto& t = spec.structure.templates[static_cast<std::size_t>(template_of[idx])];
        std::uniform_real_distribution<double> jitter(0.9, 1.1);
        // Strengths are quoted at kReferenceTokens. Shifting the score by
        // log(N / reference) keeps the favoured block's share of the row
        // mass roughly independent of the sequence length.
        const double length_shift =
            std::log(static_cast<double>(spec.tokens) / kReferenceTokens);
        const double strength = std::max(0.5, t.strength * jitter(rng) + length_shift);
        fill_template_head(t, strength, codes, spec, spec.structure.noise_amplitude, rng,
                           head.input);
      }
      std::normal_distribution<double> normal(0.0, 1.0);
      for (auto& x : head.input.v.data())
      {
        x = static_cast<float>(normal(rng));
      }
      model.heads.push_back(std::move(head));
    }
  }
  return model;
}

template <typename T>
AttentionInput<T> random_attention_input(std::size_t tokens, std::size_t head_dim,
                                         std::uint64_t seed, bool causal)
{
  Rng rng(mix_seed(seed, 0x1A9));
  std::normal_distribution<double> normal(0.0, 1.0);
  AttentionInput<T> input{Matrix<T>(tokens, head_dim), Matrix<T>(tokens, head_dim),
                          Matrix<T>(tokens, head_dim), causal};
  for (auto* m : {&input.q, &input.k, &input.v})
  {
    for (auto& x : m->data())
    {
      x = static_cast<T>(normal(rng));
    }
  }
  return input;
}

BlockMask random_sanitized_mask(std::size_t tokens, std::size_t block_size, double density,
                                std::uint64_t seed)
{
  if (!(density >= 0.0 && density <= 1.0))
  {
    throw InvalidInput("mask density must lie in [0, 1]");
  }
  BlockMask mask = sanitize_mask(BlockMask::empty(tokens, block_size));
  const std::size_t n = mask.query_blocks();
  std::vector<std::pair<std::size_t, std::size_t>> free;
  for (std::size_t i = 0; i < n; ++i)
  {
    for (std::size_t j = 0; j <= i; ++j)
    {
      if (!mask.get(i, j))
      {
        free.emplace_back(i, j);
      }
    }
  }
  Rng rng(mix_seed(seed, 0x3A5C));
  std::shuffle(free.begin(), free.end(), rng);
  const auto target = static_cast<std::size_t>(
      std::llround(density * static_cast<double>(causal_block_total(n))));
  const std::size_t have = mask.causal_popcount();
  const std::size_t extra = target > have ? std::min(target - have, free.size()) : 0;
  for (std::size_t e = 0; e < extra; ++e)
  {
    mask.set(free[e].first, free[e].second);
  }
  return mask;
}

template AttentionInput<float> random_attention_input<float>(std::size_t, std::size_t,
                                                             std::uint64_t, bool);
template AttentionInput<double> random_attention_input<double>(std::size_t, std::size_t,
                                                               std::uint64_t, bool);
}  // namespace shareprefill
