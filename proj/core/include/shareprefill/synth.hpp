#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "shareprefill/attention.hpp"
#include "shareprefill/block_grid.hpp"
#include "shareprefill/clustering.hpp"

namespace shareprefill
{
/// Block-level attention structures the synthetic generator can plant.
enum class TemplateKind
{
  Sink,             ///< every query favours key block 0
  Staircase,        ///< queries favour the first block of their chunk of `param` blocks
  LocalBand,        ///< block offsets 0 .. param-1
  Slash,            ///< block offset `param` (offset 0 for earlier rows)
  VerticalStripes,  ///< key blocks b with b % param == param / 2
};

const char* to_string(TemplateKind kind);
TemplateKind template_kind_from_string(const std::string& name);

struct TemplateSpec
{
  TemplateKind kind = TemplateKind::Sink;
  std::size_t param = 0;
  /// Scaled score (q.k / sqrt(d_h)) of a favoured token pair at 2048 tokens;
  /// other lengths shift it by log(N / 2048).
  double strength = 8.0;

  bool operator==(const TemplateSpec&) const = default;
};

struct SynthStructure
{
  std::vector<TemplateSpec> templates;
  /// Norm of the per-token noise vector relative to the template signal.
  double noise_amplitude = 0.05;
  /// Heads with no template (random Q/K); ground-truth label -1.
  std::size_t noise_heads = 0;
  /// Drives head -> template assignment only, so that inputs generated from
  /// different `ModelSpec::seed`s share one ground-truth clustering.
  std::uint64_t assignment_seed = 1234;

  bool operator==(const SynthStructure&) const = default;
};

/// The first `count` (<= 8) entries of the built-in template suite.
std::vector<TemplateSpec> default_templates(std::size_t count = 4);

/// Shape and generator parameters of the attention-only synthetic model.
struct ModelSpec
{
  std::size_t layers = 4;
  std::size_t heads = 8;
  std::size_t head_dim = 64;
  std::size_t tokens = 2048;
  std::size_t block_size = 64;
  std::uint64_t seed = 0;
  SynthStructure structure{default_templates(4)};

  /// Throws InvalidInput unless every size is positive, N >= block_size,
  /// head_dim >= 8 and the template list is non-empty.
  void validate() const;

  bool operator==(const ModelSpec&) const = default;
};

struct SyntheticModel
{
  ModelSpec spec;
  /// Ordered by (layer, head).
  std::vector<HeadAttention> heads;
  /// Template index per head, -1 for noise heads.
  std::vector<int> template_of;
};

/// Deterministic in `spec`: identical specs give bitwise-identical tensors.
SyntheticModel synth_model_generate(const ModelSpec& spec);

/// Q, K, V with i.i.d. N(0, 1) entries.
template <typename T>
AttentionInput<T> random_attention_input(std::size_t tokens, std::size_t head_dim,
                                         std::uint64_t seed, bool causal = true);

/// Sanitized causal mask with roughly `density` of the causal blocks set:
/// the diagonal and first column, plus uniformly chosen extra blocks.
BlockMask random_sanitized_mask(std::size_t tokens, std::size_t block_size, double density,
                                std::uint64_t seed);
}  // namespace shareprefill
