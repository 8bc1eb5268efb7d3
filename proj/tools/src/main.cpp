#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <optional>

#include <shareprefill/config.hpp>
#include <shareprefill/errors.hpp>

#include "commands.hpp"

namespace sp = shareprefill;
namespace cli = shareprefill::cli;

namespace
{
void setup_logging()
{
  auto logger = spdlog::stderr_color_mt("shareprefill");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("SHAREPREFILL_LOG"))
  {
    const auto level = spdlog::level::from_str(env);
    // from_str maps unknown names to "off"; only trust it for the literal.
    if (level == spdlog::level::off && std::string(env) != "off")
    {
      spdlog::warn("SHAREPREFILL_LOG='{}' is not a log level; using info", env);
    }
    else
    {
      spdlog::set_level(level);
    }
  }
}

struct Overrides
{
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> gamma;
  std::optional<double> tau;
  std::optional<double> delta;
  std::optional<std::size_t> block_size;
  std::optional<unsigned> threads;
  std::optional<std::string> out;
};

sp::Config resolve_config(const Overrides& o)
{
  sp::Config c = o.config_path.empty() ? sp::Config{} : sp::load_config(o.config_path);
  if (o.seed)
  {
    c.model.seed = *o.seed;
  }
  if (o.gamma)
  {
    c.thresholds.gamma = *o.gamma;
  }
  if (o.tau)
  {
    c.thresholds.tau = *o.tau;
  }
  if (o.delta)
  {
    c.thresholds.delta = *o.delta;
  }
  if (o.block_size)
  {
    c.model.block_size = *o.block_size;
    c.bench.block_size = *o.block_size;
  }
  if (o.threads)
  {
    c.threads = *o.threads;
  }
  if (o.out)
  {
    c.out_dir = *o.out;
  }
  c.validate();
  return c;
}
}  // namespace

int main(int argc, char** argv)
{
  setup_logging();

  CLI::App app{"Block-sparse prefill attention with cross-head pattern sharing"};
  app.require_subcommand(1);
  Overrides o;
  app.add_option("--config", o.config_path, "JSON config file");
  app.add_option("--seed", o.seed, "Model content seed");
  app.add_option("--gamma", o.gamma, "Cumulative attention threshold, (0, 1]");
  app.add_option("--tau", o.tau, "Similarity threshold, [0, 1]");
  app.add_option("--delta", o.delta, "Sparsity threshold, [0, 1.01]; 1.01 disables exclusion");
  app.add_option("--block-size", o.block_size, "Block size in tokens");
  app.add_option("--threads", o.threads, "Kernel worker threads");
  app.add_option("--out", o.out, "Output directory");

  auto* calibrate = app.add_subcommand("calibrate", "Dense calibration pass; writes calibration.amap");

  std::string amap_path;
  auto* cluster = app.add_subcommand("cluster", "Cluster heads from an AMAP file; writes head_dict.json");
  cluster->add_option("amap", amap_path, "AMAP file")->required();

  std::string dict_path;
  std::string mode;
  bool dump_masks = false;
  auto* prefill = app.add_subcommand("prefill", "Run a prefill pass; writes trace.json");
  prefill->add_option("head_dict", dict_path, "Head dictionary JSON")->required();
  prefill->add_option("--mode", mode, "sparse, dense or both");
  prefill->add_flag("--dump-masks", dump_masks, "Write per-head mask PGMs under masks/");

  auto* bench = app.add_subcommand("bench", "Latency benchmark; writes bench.json and bench.csv");

  std::size_t cases = 1000;
  auto* pooling = app.add_subcommand("diagnose-pooling", "Pooled block estimate diagnostics");
  pooling->add_option("--cases", cases, "Number of random cases");

  std::optional<std::string> sim_amap;
  auto* similarity = app.add_subcommand(
      "similarity", "Jaccard similarity of head masks; writes similarity.csv and similarity.pgm");
  similarity->add_option("--amap", sim_amap, "Use calibration maps instead of a dense pass");

  try
  {
    app.parse(argc, argv);
  }
  catch (const CLI::ParseError& e)
  {
    const int code = app.exit(e);
    return code == 0 ? cli::kOk : cli::kConfigError;
  }

  try
  {
    sp::Config config = resolve_config(o);
    if (*calibrate)
    {
      return cli::cmd_calibrate(config);
    }
    if (*cluster)
    {
      return cli::cmd_cluster(config, amap_path);
    }
    if (*prefill)
    {
      if (!mode.empty())
      {
        config.mode = sp::run_mode_from_string(mode);
      }
      config.dump_masks = config.dump_masks || dump_masks;
      return cli::cmd_prefill(config, dict_path);
    }
    if (*bench)
    {
      return cli::cmd_bench(config);
    }
    if (*pooling)
    {
      return cli::cmd_diagnose_pooling(config.model.seed, cases);
    }
    if (*similarity)
    {
      return cli::cmd_similarity(config, sim_amap);
    }
  }
  catch (const sp::IoError& e)
  {
    spdlog::error("{}", e.what());
    return cli::kIoError;
  }
  catch (const sp::FormatError& e)
  {
    spdlog::error("{}", e.what());
    return cli::kIoError;
  }
  catch (const sp::InvalidInput& e)
  {
    spdlog::error("{}", e.what());
    return cli::kConfigError;
  }
  catch (const sp::LookupError& e)
  {
    spdlog::error("{}", e.what());
    return cli::kConfigError;
  }
  catch (const cli::InvariantFailure& e)
  {
    spdlog::error("{}", e.what());
    return cli::kInvariantViolation;
  }
  catch (const sp::ContractViolation& e)
  {
    spdlog::error("{}", e.what());
    return cli::kInvariantViolation;
  }
  catch (const sp::DegenerateMask& e)
  {
    spdlog::error("{}", e.what());
    return cli::kInvariantViolation;
  }
  catch (const std::exception& e)
  {
    spdlog::error("{}", e.what());
    return cli::kFailure;
  }
  return cli::kFailure;
}
