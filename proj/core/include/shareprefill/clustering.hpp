#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "shareprefill/attention.hpp"
#include "shareprefill/block_grid.hpp"
#include "shareprefill/head_dict.hpp"
#include "shareprefill/matrix.hpp"

namespace shareprefill
{
/// One head's Q/K/V as produced by a model run.
struct HeadAttention
{
  std::size_t layer = 0;
  std::size_t head = 0;
  AttentionInput<float> input;
};

/// Fixed-resolution attention map of one head. Rows are the mean of the
/// token rows in each row bin; columns sum the token columns in each column
/// bin, so every row sums to 1.
struct AttentionMapRecord
{
  std::size_t layer = 0;
  std::size_t head = 0;
  Matrix<float> map;
};

/// Dense attention of one head pooled onto an R x R grid. Token i falls in
/// bin floor(i * R / N). Throws InvalidInput when N < R.
AttentionMapRecord record_head_map(std::size_t layer, std::size_t head,
                                   const AttentionInput<float>& input, std::size_t resolution);

/// record_head_map() for every head, in input order.
std::vector<AttentionMapRecord> record_calibration(std::span<const HeadAttention> heads,
                                                   std::size_t resolution);

/// Maps an attention record to a fixed-length vector. Implementations are
/// looked up by id, which is persisted in the head dictionary.
class Embedder
{
public:
  virtual ~Embedder() = default;
  virtual std::string id() const = 0;
  virtual std::vector<double> embed(const AttentionMapRecord& record) const = 0;
};

/// Flattened map scaled to unit L2 norm. Throws InvalidInput on an
/// all-zero map.
class FlattenL2Embedder : public Embedder
{
public:
  static constexpr const char* kId = "flatten-l2";
  std::string id() const override { return kId; }
  std::vector<double> embed(const AttentionMapRecord& record) const override;
};

/// Throws InvalidInput for an unknown id.
std::unique_ptr<Embedder> make_embedder(const std::string& id);

/// Default embedder.
std::vector<double> embed_map(const AttentionMapRecord& record);

enum class Linkage
{
  Average,
  Complete,
  Single,
};

const char* to_string(Linkage linkage);
Linkage linkage_from_string(const std::string& name);

struct ClusterParams
{
  double distance_threshold = 0.5;
  std::size_t min_cluster_size = 5;
  Linkage linkage = Linkage::Average;

  void validate() const;
};

/// Agglomerative clustering on Euclidean distances, cut at
/// `distance_threshold` (clusters merge while their linkage distance is
/// <= the threshold). Clusters smaller than `min_cluster_size` get label -1.
/// Surviving clusters are numbered 0.. in order of their smallest member.
/// Equal distances merge the pair with the smaller indices first.
std::vector<int> agglomerative_labels(std::span<const std::vector<double>> embeddings,
                                      const ClusterParams& params);

/// Clusters heads into a HeadDict. `keys[i]` names the head of
/// `embeddings[i]`. Noise heads get HeadDict::kDefaultNoiseCluster.
HeadDict hierarchical_cluster(std::span<const HeadKey> keys,
                              std::span<const std::vector<double>> embeddings,
                              const ClusterParams& params, const std::string& embedder_id);

struct JaccardMatrix
{
  Matrix<double> similarity;
  /// Off-diagonal pairs where both masks are empty in the causal region;
  /// their entry is 0.
  std::vector<std::pair<std::size_t, std::size_t>> empty_pairs;
};

/// |A and B| / |A or B| over set bits on or below the diagonal. Throws
/// InvalidInput on shape mismatch.
JaccardMatrix jaccard_similarity_matrix(std::span<const BlockMask> masks);

/// Chance-corrected agreement between two labelings of the same items.
/// Every label (including -1) is treated as its own group.
double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

/// True when both labelings induce the same partition.
bool same_partition(std::span<const int> a, std::span<const int> b);

/// Calibration map file: "AMAPv001", u32 layers, heads, R (little endian),
/// then layers*heads row-major R x R float32 maps ordered by (layer, head).
struct AttentionMapFile
{
  std::size_t layers = 0;
  std::size_t heads = 0;
  std::size_t resolution = 0;
  std::vector<AttentionMapRecord> records;
};

std::vector<char> encode_amap(const AttentionMapFile& file);
AttentionMapFile decode_amap(std::span<const char> bytes);
void write_amap(const AttentionMapFile& file, const std::string& path);
AttentionMapFile read_amap(const std::string& path);
}  // namespace shareprefill
