#pragma once

// nlohmann adapters for core value types. Private to the core library.

#include <json.hpp>

#include "shareprefill/clustering.hpp"
#include "shareprefill/pattern.hpp"
#include "shareprefill/synth.hpp"

namespace shareprefill
{
inline void to_json(nlohmann::json& j, const TemplateSpec& t)
{
  j = {{"kind", to_string(t.kind)}, {"param", t.param}, {"strength", t.strength}};
}

inline void from_json(const nlohmann::json& j, TemplateSpec& t)
{
  t.kind = template_kind_from_string(j.at("kind").get<std::string>());
  t.param = j.value("param", std::size_t{0});
  t.strength = j.value("strength", t.strength);
}

inline void to_json(nlohmann::json& j, const SynthStructure& s)
{
  j = {{"templates", s.templates},
       {"noise_amplitude", s.noise_amplitude},
       {"noise_heads", s.noise_heads},
       {"assignment_seed", s.assignment_seed}};
}

inline void from_json(const nlohmann::json& j, SynthStructure& s)
{
  if (j.contains("templates"))
  {
    s.templates = j.at("templates").get<std::vector<TemplateSpec>>();
  }
  if (j.contains("default_templates"))
  {
    s.templates = default_templates(j.at("default_templates").get<std::size_t>());
  }
  s.noise_amplitude = j.value("noise_amplitude", s.noise_amplitude);
  s.noise_heads = j.value("noise_heads", s.noise_heads);
  s.assignment_seed = j.value("assignment_seed", s.assignment_seed);
}

inline void to_json(nlohmann::json& j, const ModelSpec& m)
{
  j = {{"layers", m.layers},         {"heads", m.heads}, {"head_dim", m.head_dim},
       {"tokens", m.tokens},         {"block_size", m.block_size},
       {"seed", m.seed},             {"structure", m.structure}};
}

inline void from_json(const nlohmann::json& j, ModelSpec& m)
{
  m.layers = j.value("layers", m.layers);
  m.heads = j.value("heads", m.heads);
  m.head_dim = j.value("head_dim", m.head_dim);
  m.tokens = j.value("tokens", m.tokens);
  m.block_size = j.value("block_size", m.block_size);
  m.seed = j.value("seed", m.seed);
  if (j.contains("structure"))
  {
    from_json(j.at("structure"), m.structure);
  }
}

inline void to_json(nlohmann::json& j, const Thresholds& t)
{
  j = {{"gamma", t.gamma}, {"tau", t.tau}, {"delta", t.delta}};
}

inline void from_json(const nlohmann::json& j, Thresholds& t)
{
  t.gamma = j.value("gamma", t.gamma);
  t.tau = j.value("tau", t.tau);
  t.delta = j.value("delta", t.delta);
}

inline void to_json(nlohmann::json& j, const ClusterParams& p)
{
  j = {{"distance_threshold", p.distance_threshold},
       {"min_cluster_size", p.min_cluster_size},
       {"linkage", to_string(p.linkage)}};
}

inline void from_json(const nlohmann::json& j, ClusterParams& p)
{
  p.distance_threshold = j.value("distance_threshold", p.distance_threshold);
  p.min_cluster_size = j.value("min_cluster_size", p.min_cluster_size);
  if (j.contains("linkage"))
  {
    p.linkage = linkage_from_string(j.at("linkage").get<std::string>());
  }
}
}  // namespace shareprefill
