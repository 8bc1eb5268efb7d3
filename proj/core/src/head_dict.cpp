#include "shareprefill/head_dict.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "shareprefill/errors.hpp"

namespace shareprefill
{
using nlohmann::json;

int HeadDict::cluster_of(std::size_t layer, std::size_t head) const
{
  const auto it = assignment_.find(HeadKey{layer, head});
  if (it == assignment_.end())
  {
    throw LookupError("head dictionary has no entry for layer " + std::to_string(layer) +
                      ", head " + std::to_string(head));
  }
  return it->second;
}

bool HeadDict::covers(std::size_t layers, std::size_t heads) const
{
  for (std::size_t l = 0; l < layers; ++l)
  {
    for (std::size_t h = 0; h < heads; ++h)
    {
      if (!contains(l, h))
      {
        return false;
      }
    }
  }
  return true;
}

std::size_t HeadDict::num_clusters() const
{
  return cluster_sizes().size();
}

std::size_t HeadDict::noise_count() const
{
  std::size_t count = 0;
  for (const auto& [key, cluster] : assignment_)
  {
    count += cluster == noise_cluster_id_ ? 1 : 0;
  }
  return count;
}

std::map<int, std::size_t> HeadDict::cluster_sizes() const
{
  std::map<int, std::size_t> sizes;
  for (const auto& [key, cluster] : assignment_)
  {
    if (cluster != noise_cluster_id_)
    {
      ++sizes[cluster];
    }
  }
  return sizes;
}

std::string head_dict_to_json(const HeadDict& dict)
{
  json doc;
  doc["version"] = HeadDict::kSchemaVersion;
  doc["noise_cluster_id"] = dict.noise_cluster_id();
  doc["min_cluster_size"] = dict.min_cluster_size;
  doc["distance_threshold"] = dict.distance_threshold;
  doc["embedder"] = dict.embedder;
  if (!dict.calibration_source.empty())
  {
    doc["calibration_source"] = dict.calibration_source;
  }
  json rows = json::array();
  for (const auto& [key, cluster] : dict.assignment())
  {
    rows.push_back({{"layer", key.layer}, {"head", key.head}, {"cluster", cluster}});
  }
  doc["assignment"] = std::move(rows);
  return doc.dump(2);
}

HeadDict head_dict_from_json(const std::string& text)
{
  json doc;
  try
  {
    doc = json::parse(text);
  }
  catch (const json::parse_error& e)
  {
    throw FormatError(std::string("head dict: invalid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("version"))
  {
    throw FormatError("head dict: missing \"version\"");
  }
  if (!doc["version"].is_number_integer() || doc["version"].get<int>() != HeadDict::kSchemaVersion)
  {
    throw VersionError("head dict: unsupported schema version " + doc["version"].dump() +
                       " (expected " + std::to_string(HeadDict::kSchemaVersion) + ")");
  }
  try
  {
    HeadDict dict(doc.at("noise_cluster_id").get<int>());
    dict.min_cluster_size = doc.at("min_cluster_size").get<std::size_t>();
    dict.distance_threshold = doc.at("distance_threshold").get<double>();
    dict.embedder = doc.at("embedder").get<std::string>();
    dict.calibration_source = doc.value("calibration_source", std::string{});
    for (const auto& row : doc.at("assignment"))
    {
      const auto layer = row.at("layer").get<std::size_t>();
      const auto head = row.at("head").get<std::size_t>();
      if (dict.contains(layer, head))
      {
        throw FormatError("head dict: duplicate entry for layer " + std::to_string(layer) +
                          ", head " + std::to_string(head));
      }
      dict.assign(layer, head, row.at("cluster").get<int>());
    }
    return dict;
  }
  catch (const json::exception& e)
  {
    throw FormatError(std::string("head dict: ") + e.what());
  }
}

void save_head_dict(const HeadDict& dict, const std::string& path)
{
  std::ofstream out(path);
  if (!out)
  {
    throw IoError("cannot open " + path + " for writing");
  }
  out << head_dict_to_json(dict) << '\n';
  if (!out)
  {
    throw IoError("failed writing " + path);
  }
}

HeadDict load_head_dict(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
  {
    throw IoError("cannot open " + path);
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return head_dict_from_json(buffer.str());
}

HeadDict single_cluster_dict(std::size_t layers, std::size_t heads)
{
  HeadDict dict;
  dict.min_cluster_size = 1;
  dict.embedder = "none";
  for (std::size_t l = 0; l < layers; ++l)
  {
    for (std::size_t h = 0; h < heads; ++h)
    {
      dict.assign(l, h, 0);
    }
  }
  return dict;
}
}  // namespace shareprefill
