#pragma once

#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "vsd/data.hpp"
#include "vsd/inference.hpp"

namespace vsd {

inline constexpr int kCheckpointVersion = 1;

/// A resumable snapshot of a training run. Serialized as one JSON document;
/// the layout is described in docs/checkpoint.md.
struct Checkpoint {
  std::string spec_hash;
  nlohmann::json config;  // resolved ExperimentConfig
  Normalization normalization;
  TrainState state;
  std::map<std::string, Tensor> parameters;
};

nlohmann::json checkpoint_to_json(const Checkpoint& ckpt);
/// Throws DataError on a malformed document or an unsupported version.
Checkpoint checkpoint_from_json(const nlohmann::json& j);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Writes to a temporary file in the same directory and renames it over `path`.
/// Creates missing parent directories.
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

/// epoch,objective,data_term,kl_term,lr rows.
std::string trace_csv(const std::vector<EpochRecord>& trace);

}  // namespace vsd
