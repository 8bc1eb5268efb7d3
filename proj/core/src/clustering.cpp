#include "shareprefill/clustering.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <numeric>

#include "shareprefill/errors.hpp"

namespace shareprefill
{
namespace
{
constexpr char kAmapMagic[8] = {'A', 'M', 'A', 'P', 'v', '0', '0', '1'};

std::size_t bin_of(std::size_t index, std::size_t count, std::size_t bins)
{
  return index * bins / count;
}

void put_u32(std::vector<char>& out, std::uint32_t value)
{
  for (int shift = 0; shift < 32; shift += 8)
  {
    out.push_back(static_cast<char>((value >> shift) & 0xFFu));
  }
}

std::uint32_t get_u32(std::span<const char> bytes, std::size_t offset)
{
  std::uint32_t value = 0;
  for (int i = 0; i < 4; ++i)
  {
    value |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
  }
  return value;
}

double squared_distance(const std::vector<double>& a, const std::vector<double>& b)
{
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
  {
    const double diff = a[i] - b[i];
    total += diff * diff;
  }
  return total;
}

double choose2(double n)
{
  return n * (n - 1.0) / 2.0;
}
}  // namespace

AttentionMapRecord record_head_map(std::size_t layer, std::size_t head,
                                   const AttentionInput<float>& input, std::size_t resolution)
{
  const std::size_t n = input.tokens();
  if (resolution == 0)
  {
    throw InvalidInput("calibration resolution must be positive");
  }
  if (n < resolution)
  {
    throw InvalidInput("calibration input too short: " + std::to_string(n) +
                       " tokens for resolution " + std::to_string(resolution));
  }
  std::vector<std::size_t> rows_per_bin(resolution, 0);
  for (std::size_t i = 0; i < n; ++i)
  {
    ++rows_per_bin[bin_of(i, n, resolution)];
  }

  Matrix<double> acc(resolution, resolution, 0.0);
  visit_attention_rows(input, [&](std::size_t row, std::span<const double> probs) {
    const std::size_t rb = bin_of(row, n, resolution);
    const double weight = 1.0 / static_cast<double>(rows_per_bin[rb]);
    auto target = acc.row(rb);
    for (std::size_t c = 0; c < probs.size(); ++c)
    {
      target[bin_of(c, n, resolution)] += probs[c] * weight;
    }
  });

  AttentionMapRecord record{layer, head, Matrix<float>(resolution, resolution)};
  for (std::size_t r = 0; r < resolution; ++r)
  {
    for (std::size_t c = 0; c < resolution; ++c)
    {
      record.map(r, c) = static_cast<float>(acc(r, c));
    }
  }
  return record;
}

std::vector<AttentionMapRecord> record_calibration(std::span<const HeadAttention> heads,
                                                   std::size_t resolution)
{
  std::vector<AttentionMapRecord> records;
  records.reserve(heads.size());
  for (const auto& h : heads)
  {
    records.push_back(record_head_map(h.layer, h.head, h.input, resolution));
  }
  return records;
}

std::vector<double> FlattenL2Embedder::embed(const AttentionMapRecord& record) const
{
  const auto values = record.map.data();
  std::vector<double> out(values.begin(), values.end());
  double norm = 0.0;
  for (const double v : out)
  {
    norm += v * v;
  }
  norm = std::sqrt(norm);
  if (!(norm > 0.0))
  {
    throw InvalidInput("cannot embed an all-zero attention map (layer " +
                       std::to_string(record.layer) + ", head " + std::to_string(record.head) +
                       ")");
  }
  for (auto& v : out)
  {
    v /= norm;
  }
  return out;
}

std::unique_ptr<Embedder> make_embedder(const std::string& id)
{
  if (id == FlattenL2Embedder::kId)
  {
    return std::make_unique<FlattenL2Embedder>();
  }
  throw InvalidInput("unknown embedder id '" + id + "'");
}

std::vector<double> embed_map(const AttentionMapRecord& record)
{
  return FlattenL2Embedder{}.embed(record);
}

const char* to_string(Linkage linkage)
{
  switch (linkage)
  {
    case Linkage::Average:
      return "average";
    case Linkage::Complete:
      return "complete";
    case Linkage::Single:
      return "single";
  }
  return "unknown";
}

Linkage linkage_from_string(const std::string& name)
{
  if (name == "average")
  {
    return Linkage::Average;
  }
  if (name == "complete")
  {
    return Linkage::Complete;
  }
  if (name == "single")
  {
    return Linkage::Single;
  }
  throw InvalidInput("unknown linkage '" + name + "' (expected average, complete or single)");
}

void ClusterParams::validate() const
{
  if (!(distance_threshold > 0.0))
  {
    throw InvalidInput("distance_threshold must be positive");
  }
  if (min_cluster_size < 1)
  {
    throw InvalidInput("min_cluster_size must be at least 1");
  }
}

std::vector<int> agglomerative_labels(std::span<const std::vector<double>> embeddings,
                                      const ClusterParams& params)
{
  params.validate();
  const std::size_t n = embeddings.size();
  for (const auto& e : embeddings)
  {
    if (e.size() != embeddings.front().size())
    {
      throw InvalidInput("embeddings must share one dimension");
    }
  }

  Matrix<double> dist(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
  {
    for (std::size_t j = i + 1; j < n; ++j)
    {
      dist(i, j) = dist(j, i) = std::sqrt(squared_distance(embeddings[i], embeddings[j]));
    }
  }

  std::vector<std::vector<std::size_t>> members(n);
  for (std::size_t i = 0; i < n; ++i)
  {
    members[i] = {i};
  }
  std::vector<bool> active(n, true);

  for (std::size_t merges = 0; merges + 1 < n; ++merges)
  {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0;
    std::size_t bj = 0;
    for (std::size_t i = 0; i < n; ++i)
    {
      if (!active[i])
      {
        continue;
      }
      for (std::size_t j = i + 1; j < n; ++j)
      {
        if (active[j] && dist(i, j) < best)
        {
          best = dist(i, j);
          bi = i;
          bj = j;
        }
      }
    }
    if (best > params.distance_threshold)
    {
      break;
    }

    // Lance-Williams update; bj folds into bi.
    const double si = static_cast<double>(members[bi].size());
    const double sj = static_cast<double>(members[bj].size());
    for (std::size_t k = 0; k < n; ++k)
    {
      if (!active[k] || k == bi || k == bj)
      {
        continue;
      }
      double merged = 0.0;
      switch (params.linkage)
      {
        case Linkage::Average:
          merged = (si * dist(bi, k) + sj * dist(bj, k)) / (si + sj);
          break;
        case Linkage::Complete:
          merged = std::max(dist(bi, k), dist(bj, k));
          break;
        case Linkage::Single:
          merged = std::min(dist(bi, k), dist(bj, k));
          break;
      }
      dist(bi, k) = dist(k, bi) = merged;
    }
    members[bi].insert(members[bi].end(), members[bj].begin(), members[bj].end());
    members[bj].clear();
    active[bj] = false;
  }

  std::vector<std::vector<std::size_t>> clusters;
  for (std::size_t i = 0; i < n; ++i)
  {
    if (active[i])
    {
      auto group = members[i];
      std::sort(group.begin(), group.end());
      clusters.push_back(std::move(group));
    }
  }
  std::sort(clusters.begin(), clusters.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });

  std::vector<int> labels(n, -1);
  int next = 0;
  for (const auto& group : clusters)
  {
    if (group.size() < params.min_cluster_size)
    {
      continue;
    }
    for (const auto idx : group)
    {
      labels[idx] = next;
    }
    ++next;
  }
  return labels;
}

HeadDict hierarchical_cluster(std::span<const HeadKey> keys,
                              std::span<const std::vector<double>> embeddings,
                              const ClusterParams& params, const std::string& embedder_id)
{
  if (keys.size() != embeddings.size())
  {
    throw InvalidInput("hierarchical_cluster: one key per embedding required");
  }
  if (keys.size() < 2)
  {
    throw InvalidInput("hierarchical_cluster: need at least two heads");
  }
  const auto labels = agglomerative_labels(embeddings, params);
  HeadDict dict;
  dict.min_cluster_size = params.min_cluster_size;
  dict.distance_threshold = params.distance_threshold;
  dict.embedder = embedder_id;
  for (std::size_t i = 0; i < keys.size(); ++i)
  {
    if (dict.contains(keys[i].layer, keys[i].head))
    {
      throw InvalidInput("hierarchical_cluster: duplicate head key");
    }
    dict.assign(keys[i].layer, keys[i].head,
                labels[i] < 0 ? HeadDict::kDefaultNoiseCluster : labels[i]);
  }
  return dict;
}

JaccardMatrix jaccard_similarity_matrix(std::span<const BlockMask> masks)
{
  const std::size_t m = masks.size();
  JaccardMatrix out{Matrix<double>(m, m, 0.0), {}};
  for (const auto& mask : masks)
  {
    if (!mask.same_shape(masks.front()))
    {
      throw InvalidInput("jaccard_similarity_matrix: masks must share a grid shape");
    }
  }
  for (std::size_t a = 0; a < m; ++a)
  {
    out.similarity(a, a) = 1.0;
    for (std::size_t b = a + 1; b < m; ++b)
    {
      std::size_t inter = 0;
      std::size_t uni = 0;
      const std::size_t n = masks[a].query_blocks();
      for (std::size_t i = 0; i < n; ++i)
      {
        for (std::size_t j = 0; j <= i; ++j)
        {
          const bool x = masks[a].get(i, j);
          const bool y = masks[b].get(i, j);
          inter += (x && y) ? 1 : 0;
          uni += (x || y) ? 1 : 0;
        }
      }
      double value = 0.0;
      if (uni == 0)
      {
        out.empty_pairs.emplace_back(a, b);
      }
      else
      {
        value = static_cast<double>(inter) / static_cast<double>(uni);
      }
      out.similarity(a, b) = out.similarity(b, a) = value;
    }
  }
  return out;
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b)
{
  if (a.size() != b.size())
  {
    throw InvalidInput("adjusted_rand_index: labelings differ in length");
  }
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> rows;
  std::map<int, double> cols;
  for (std::size_t i = 0; i < a.size(); ++i)
  {
    joint[{a[i], b[i]}] += 1.0;
    rows[a[i]] += 1.0;
    cols[b[i]] += 1.0;
  }
  double index = 0.0;
  for (const auto& [key, count] : joint)
  {
    index += choose2(count);
  }
  double sum_rows = 0.0;
  for (const auto& [key, count] : rows)
  {
    sum_rows += choose2(count);
  }
  double sum_cols = 0.0;
  for (const auto& [key, count] : cols)
  {
    sum_cols += choose2(count);
  }
  const double total = choose2(static_cast<double>(a.size()));
  if (total == 0.0)
  {
    return 1.0;
  }
  const double expected = sum_rows * sum_cols / total;
  const double maximum = 0.5 * (sum_rows + sum_cols);
  if (maximum == expected)
  {
    return 1.0;
  }
  return (index - expected) / (maximum - expected);
}

bool same_partition(std::span<const int> a, std::span<const int> b)
{
  if (a.size() != b.size())
  {
    return false;
  }
  std::map<int, int> forward;
  std::map<int, int> backward;
  for (std::size_t i = 0; i < a.size(); ++i)
  {
    const auto [f, f_new] = forward.emplace(a[i], b[i]);
    const auto [g, g_new] = backward.emplace(b[i], a[i]);
    if (f->second != b[i] || g->second != a[i])
    {
      return false;
    }
  }
  return true;
}

std::vector<char> encode_amap(const AttentionMapFile& file)
{
  const std::size_t r = file.resolution;
  if (file.records.size() != file.layers * file.heads)
  {
    throw InvalidInput("AMAP: expected " + std::to_string(file.layers * file.heads) +
                       " maps, got " + std::to_string(file.records.size()));
  }
  std::vector<char> out(std::begin(kAmapMagic), std::end(kAmapMagic));
  put_u32(out, static_cast<std::uint32_t>(file.layers));
  put_u32(out, static_cast<std::uint32_t>(file.heads));
  put_u32(out, static_cast<std::uint32_t>(r));
  out.reserve(out.size() + file.records.size() * r * r * 4);
  for (std::size_t idx = 0; idx < file.records.size(); ++idx)
  {
    const auto& rec = file.records[idx];
    if (rec.layer != idx / file.heads || rec.head != idx % file.heads)
    {
      throw InvalidInput("AMAP: records must be ordered by (layer, head)");
    }
    if (rec.map.rows() != r || rec.map.cols() != r)
    {
      throw InvalidInput("AMAP: map resolution mismatch");
    }
    for (const float v : rec.map.data())
    {
      put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
  }
  return out;
}

AttentionMapFile decode_amap(std::span<const char> bytes)
{
  constexpr std::size_t kHeader = sizeof(kAmapMagic) + 12;
  if (bytes.size() < kHeader || std::memcmp(bytes.data(), kAmapMagic, sizeof(kAmapMagic)) != 0)
  {
    throw FormatError("AMAP: bad magic (expected \"AMAPv001\")");
  }
  AttentionMapFile file;
  file.layers = get_u32(bytes, 8);
  file.heads = get_u32(bytes, 12);
  file.resolution = get_u32(bytes, 16);
  const std::size_t r = file.resolution;
  const std::size_t expected = kHeader + file.layers * file.heads * r * r * 4;
  if (bytes.size() != expected)
  {
    throw FormatError("AMAP: size " + std::to_string(bytes.size()) + " does not match header (" +
                      std::to_string(expected) + " bytes expected)");
  }
  std::size_t offset = kHeader;
  for (std::size_t l = 0; l < file.layers; ++l)
  {
    for (std::size_t h = 0; h < file.heads; ++h)
    {
      AttentionMapRecord rec{l, h, Matrix<float>(r, r)};
      for (auto& v : rec.map.data())
      {
        v = std::bit_cast<float>(get_u32(bytes, offset));
        offset += 4;
      }
      file.records.push_back(std::move(rec));
    }
  }
  return file;
}

void write_amap(const AttentionMapFile& file, const std::string& path)
{
  const auto bytes = encode_amap(file);
  std::ofstream out(path, std::ios::binary);
  if (!out)
  {
    throw IoError("cannot open " + path + " for writing");
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out)
  {
    throw IoError("failed writing " + path);
  }
}

AttentionMapFile read_amap(const std::string& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
  {
    throw IoError("cannot open " + path);
  }
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_amap(bytes);
}
}  // namespace shareprefill
