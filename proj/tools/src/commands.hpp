#pragma once

#include <optional>
#include <string>

#include <shareprefill/config.hpp>

namespace shareprefill::cli
{
/// Process exit codes.
enum ExitCode : int
{
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kIoError = 3,
  kInvariantViolation = 4,
};

/// Raised by a command whose run finished but broke a checked invariant.
class InvariantFailure : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

int cmd_calibrate(const Config& config);
int cmd_cluster(const Config& config, const std::string& amap_path);
int cmd_prefill(const Config& config, const std::string& head_dict_path);
int cmd_bench(const Config& config);
int cmd_diagnose_pooling(std::uint64_t seed, std::size_t cases);
/// Uses the AMAP maps when `amap_path` is set, otherwise a dense pass over
/// the configured model.
int cmd_similarity(const Config& config, const std::optional<std::string>& amap_path);
}  // namespace shareprefill::cli
