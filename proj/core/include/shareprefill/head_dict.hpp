#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <string>

namespace shareprefill
{
struct HeadKey
{
  std::size_t layer = 0;
  std::size_t head = 0;

  auto operator<=>(const HeadKey&) const = default;
};

/// Static (layer, head) -> cluster id map produced by offline clustering.
/// Cluster ids of real clusters are 0..num_clusters()-1; heads without a
/// reliable group share the noise id.
class HeadDict
{
public:
  static constexpr int kSchemaVersion = 1;
  static constexpr int kDefaultNoiseCluster = -1;

  HeadDict() = default;
  explicit HeadDict(int noise_cluster_id) : noise_cluster_id_(noise_cluster_id) {}

  /// Throws LookupError for an unknown head.
  int cluster_of(std::size_t layer, std::size_t head) const;
  bool is_noise(std::size_t layer, std::size_t head) const
  {
    return cluster_of(layer, head) == noise_cluster_id_;
  }
  bool contains(std::size_t layer, std::size_t head) const
  {
    return assignment_.contains(HeadKey{layer, head});
  }
  /// True when every (layer, head) of an L x H model is present.
  bool covers(std::size_t layers, std::size_t heads) const;

  void assign(std::size_t layer, std::size_t head, int cluster)
  {
    assignment_[HeadKey{layer, head}] = cluster;
  }

  const std::map<HeadKey, int>& assignment() const { return assignment_; }
  std::size_t size() const { return assignment_.size(); }

  /// Distinct non-noise cluster ids.
  std::size_t num_clusters() const;
  std::size_t noise_count() const;
  /// Members per non-noise cluster id.
  std::map<int, std::size_t> cluster_sizes() const;

  int noise_cluster_id() const { return noise_cluster_id_; }
  void set_noise_cluster_id(int id) { noise_cluster_id_ = id; }

  // Provenance, persisted alongside the assignment.
  std::size_t min_cluster_size = 5;
  double distance_threshold = 0.0;
  std::string embedder = "flatten-l2";
  std::string calibration_source;

  bool operator==(const HeadDict&) const = default;

private:
  int noise_cluster_id_ = kDefaultNoiseCluster;
  std::map<HeadKey, int> assignment_;
};

/// JSON (schema version 1). Throws IoError / FormatError / VersionError.
void save_head_dict(const HeadDict& dict, const std::string& path);
HeadDict load_head_dict(const std::string& path);

std::string head_dict_to_json(const HeadDict& dict);
HeadDict head_dict_from_json(const std::string& text);

/// One cluster for every head; handy for ablations and tests.
HeadDict single_cluster_dict(std::size_t layers, std::size_t heads);
}  // namespace shareprefill
