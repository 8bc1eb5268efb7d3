#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "shareprefill/clustering.hpp"
#include "shareprefill/pattern.hpp"
#include "shareprefill/pipeline.hpp"
#include "shareprefill/synth.hpp"

namespace shareprefill
{
/// Largest bench length accepted without `allow_paper_scale`.
inline constexpr std::size_t kDeskScaleTokens = 32768;

struct BenchOptions
{
  std::vector<std::size_t> ladder{1024, 2048, 4096, 8192};
  std::size_t head_dim = 64;
  std::size_t block_size = 64;
  /// Target causal density of the random sanitized mask.
  double density = 0.25;
  std::size_t warmup = 1;
  std::size_t repetitions = 10;
  bool allow_paper_scale = false;
};

struct CalibrationOptions
{
  /// Content seed of the calibration input; the head/template assignment
  /// still comes from the model's assignment_seed.
  std::uint64_t seed = 7;
  /// Calibration sequence length, 0 means the model's length.
  std::size_t tokens = 0;
  /// Side of the pooled attention map.
  std::size_t resolution = 32;
};

struct Config
{
  ModelSpec model;
  Thresholds thresholds;
  ClusterParams cluster;
  CalibrationOptions calibration;
  BenchOptions bench;
  RunMode mode = RunMode::Sparse;
  bool dump_masks = false;
  unsigned threads = 1;
  std::string out_dir = "out";

  /// Throws ConfigError naming the offending field.
  void validate() const;

  /// The model used for calibration runs.
  ModelSpec calibration_model() const;
};

/// Reads a JSON config. Missing keys keep their defaults; unknown top-level
/// keys are rejected. Throws IoError or ConfigError. Does not validate.
Config load_config(const std::string& path);
Config config_from_json(const std::string& text);
std::string config_to_json(const Config& config);
}  // namespace shareprefill
