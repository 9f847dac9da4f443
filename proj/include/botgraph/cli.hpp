#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "botgraph/train.hpp"

namespace botgraph {

/// Everything a CLI run needs. Serialized as `key = value` lines (see
/// docs/formats.md); write -> parse is lossless.
struct RunConfig {
  std::string dataset;
  std::string format = "jsonl";
  std::string embeddings;  // RGBE path; empty -> fallback featurizer in memory
  std::size_t fallback_dim = 64;
  std::uint64_t fallback_seed = 0;
  std::string output_dir;
  std::string model;  // defaults to <output_dir>/model.bin
  std::vector<double> taus = {0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 0.99};
  bool cache = true;
  std::string fused_cache;  // explicit fused-matrix cache path (optional)
  TrainConfig train;

  bool operator==(const RunConfig& o) const;
};

std::string to_config_text(const RunConfig& cfg);

/// Applies every `key = value` line of `text` on top of `base`.
/// Throws ConfigError naming the line for unknown keys or bad values.
RunConfig parse_config_text(const std::string& text, RunConfig base = {});

/// Sets one key. Throws ConfigError.
void apply_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kUnexpected = 1;
inline constexpr int kUsage = 2;
inline constexpr int kDiverged = 3;
inline constexpr int kModelMismatch = 4;
inline constexpr int kMissingMetadata = 5;
inline constexpr int kDataError = 6;
inline constexpr int kValidationFailed = 7;
inline constexpr int kDegenerateLabels = 8;
}  // namespace exit_code

/// Entry point of the `botgraph` executable; returns the process exit code.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace botgraph
