#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vsd/data.hpp"
#include "vsd/inference.hpp"
#include "vsd/layers.hpp"
#include "vsd/metrics.hpp"

namespace vsd {

/// Invalid configuration: unknown key, wrong type, or out-of-range value.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  std::vector<std::string> architecture{"dense:100", "relu", "dense:1"};
  std::string variant = "vsd";
  std::string likelihood = "auto";  // auto | categorical | gaussian
  double noise_variance = 0.0;      // > 0 fixes the Gaussian variance, in target units
  LayerOptions layers;
};

struct EvalConfig {
  std::size_t ece_bins = kDefaultEceBins;
  std::size_t entropy_bins = 20;
  bool entropy_per_class = false;
  std::size_t regularizer_samples = 10000;
  std::size_t regularizer_rows = 64;
};

struct ExperimentConfig {
  ModelConfig model;
  double lambda = 1.0;
  TrainSpec train;
  DatasetConfig data;
  EvalConfig eval;
  std::string output_dir = "runs/default";

  /// Resolved likelihood: "auto" picks gaussian for regression sources.
  Likelihood likelihood() const;
  /// Throws ConfigError on invalid values.
  void validate() const;
};

nlohmann::json config_to_json(const ExperimentConfig& config);
/// Strict conversion: every key must be known and every value well typed.
ExperimentConfig config_from_json(const nlohmann::json& j);

/// Merges `patch` into `base`, rejecting keys that `base` does not have.
void merge_config(nlohmann::json& base, const nlohmann::json& patch, const std::string& where = "");

/// Applies "dotted.key=value". The value is parsed as JSON when possible
/// and kept as a string otherwise.
void apply_override(nlohmann::json& tree, const std::string& assignment);

/// defaults < file < overrides. An empty path skips the file.
ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});

/// FNV-1a 64-bit over the compact dump of the training-relevant part of the
/// config (everything except output_dir and eval), as 16 hex digits.
std::string spec_hash(const ExperimentConfig& config);

/// output_dir resolved against $VSD_OUTPUT_ROOT when that is set and the path is relative.
std::string resolve_output_dir(const std::string& output_dir);

}  // namespace vsd
