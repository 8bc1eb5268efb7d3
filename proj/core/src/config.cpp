#include "shareprefill/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json_io.hpp"
#include "shareprefill/errors.hpp"

namespace shareprefill
{
namespace
{
void require(bool ok, const std::string& message)
{
  if (!ok)
  {
    throw ConfigError(message);
  }
}
}  // namespace

void Config::validate() const
{
  try
  {
    thresholds.validate();
    model.validate();
    cluster.validate();
  }
  catch (const ConfigError&)
  {
    throw;
  }
  catch (const InvalidInput& e)
  {
    throw ConfigError(e.what());
  }
  require(threads >= 1, "threads must be at least 1");
  require(calibration.resolution >= 1, "calibration.resolution must be positive");
  const std::size_t cal_tokens = calibration.tokens == 0 ? model.tokens : calibration.tokens;
  require(cal_tokens >= calibration.resolution,
          "calibration.tokens (" + std::to_string(cal_tokens) +
              ") must be at least calibration.resolution (" +
              std::to_string(calibration.resolution) + ")");
  require(cal_tokens >= model.block_size, "calibration.tokens must be at least block_size");
  require(!bench.ladder.empty(), "bench.ladder must list at least one length");
  for (const auto n : bench.ladder)
  {
    require(n >= bench.block_size, "bench.ladder entry " + std::to_string(n) +
                                       " is shorter than bench.block_size");
    require(n <= kDeskScaleTokens || bench.allow_paper_scale,
            "bench.ladder entry " + std::to_string(n) + " exceeds " +
                std::to_string(kDeskScaleTokens) +
                " tokens; set bench.allow_paper_scale to opt in");
  }
  require(bench.head_dim >= 1, "bench.head_dim must be positive");
  require(bench.block_size >= 1, "bench.block_size must be positive");
  require(bench.density > 0.0 && bench.density <= 1.0, "bench.density must lie in (0, 1]");
  require(bench.repetitions >= 1, "bench.repetitions must be at least 1");
}

ModelSpec Config::calibration_model() const
{
  ModelSpec spec = model;
  spec.seed = calibration.seed;
  if (calibration.tokens != 0)
  {
    spec.tokens = calibration.tokens;
  }
  return spec;
}

Config config_from_json(const std::string& text)
{
  using nlohmann::json;
  json j;
  try
  {
    j = json::parse(text);
  }
  catch (const json::parse_error& e)
  {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  require(j.is_object(), "config must be a JSON object");
  static const std::set<std::string> known{"model",   "thresholds", "cluster",    "calibration",
                                           "bench",   "mode",       "dump_masks", "threads",
                                           "out_dir"};
  for (const auto& [key, value] : j.items())
  {
    require(known.contains(key), "unknown config key '" + key + "'");
  }

  Config c;
  try
  {
    if (j.contains("model"))
    {
      c.model = j.at("model").get<ModelSpec>();
    }
    if (j.contains("thresholds"))
    {
      c.thresholds = j.at("thresholds").get<Thresholds>();
    }
    if (j.contains("cluster"))
    {
      c.cluster = j.at("cluster").get<ClusterParams>();
    }
    if (j.contains("calibration"))
    {
      const auto& cal = j.at("calibration");
      c.calibration.seed = cal.value("seed", c.calibration.seed);
      c.calibration.tokens = cal.value("tokens", c.calibration.tokens);
      c.calibration.resolution = cal.value("resolution", c.calibration.resolution);
    }
    if (j.contains("bench"))
    {
      const auto& b = j.at("bench");
      c.bench.ladder = b.value("ladder", c.bench.ladder);
      c.bench.head_dim = b.value("head_dim", c.bench.head_dim);
      c.bench.block_size = b.value("block_size", c.bench.block_size);
      c.bench.density = b.value("density", c.bench.density);
      c.bench.warmup = b.value("warmup", c.bench.warmup);
      c.bench.repetitions = b.value("repetitions", c.bench.repetitions);
      c.bench.allow_paper_scale = b.value("allow_paper_scale", c.bench.allow_paper_scale);
    }
    if (j.contains("mode"))
    {
      c.mode = run_mode_from_string(j.at("mode").get<std::string>());
    }
    c.dump_masks = j.value("dump_masks", c.dump_masks);
    c.threads = j.value("threads", c.threads);
    c.out_dir = j.value("out_dir", c.out_dir);
  }
  catch (const json::exception& e)
  {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  catch (const ConfigError&)
  {
    throw;
  }
  catch (const InvalidInput& e)
  {
    throw ConfigError(e.what());
  }
  return c;
}

Config load_config(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
  {
    throw IoError("cannot open config " + path);
  }
  std::ostringstream text;
  text << in.rdbuf();
  return config_from_json(text.str());
}

std::string config_to_json(const Config& c)
{
  nlohmann::json j = {{"model", c.model},
                      {"thresholds", c.thresholds},
                      {"cluster", c.cluster},
                      {"calibration",
                       {{"seed", c.calibration.seed},
                        {"tokens", c.calibration.tokens},
                        {"resolution", c.calibration.resolution}}},
                      {"bench",
                       {{"ladder", c.bench.ladder},
                        {"head_dim", c.bench.head_dim},
                        {"block_size", c.bench.block_size},
                        {"density", c.bench.density},
                        {"warmup", c.bench.warmup},
                        {"repetitions", c.bench.repetitions},
                        {"allow_paper_scale", c.bench.allow_paper_scale}}},
                      {"mode", to_string(c.mode)},
                      {"dump_masks", c.dump_masks},
                      {"threads", c.threads},
                      {"out_dir", c.out_dir}};
  return j.dump(2);
}
}  // namespace shareprefill
