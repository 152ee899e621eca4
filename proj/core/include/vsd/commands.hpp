#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "vsd/checkpoint.hpp"
#include "vsd/config.hpp"
#include "vsd/metrics.hpp"

namespace vsd {

/// Process exit codes of the vsd tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitDivergence = 4,
  kExitVerify = 5,
};

/// Files written into the output directory.
inline constexpr const char* kCheckpointFile = "checkpoint.json";
inline constexpr const char* kTraceFile = "trace.csv";
inline constexpr const char* kResolvedConfigFile = "config.resolved.json";
inline constexpr const char* kMetricsJsonFile = "metrics.json";
inline constexpr const char* kMetricsCsvFile = "metrics.csv";
inline constexpr const char* kCalibrationFile = "calibration.csv";
inline constexpr const char* kPredictionsFile = "predictions.csv";
inline constexpr const char* kOodJsonFile = "ood_metrics.json";
inline constexpr const char* kOodCsvFile = "ood_metrics.csv";
inline constexpr const char* kEntropyInFile = "entropy_in.csv";
inline constexpr const char* kEntropyOutFile = "entropy_out.csv";
inline constexpr const char* kDiagnosticsFile = "diagnostics.json";

/// Model for `config` sized to the dataset. Gaussian likelihoods start at
/// unit precision in standardized units, or are fixed by model.noise_variance.
Model build_model(const ExperimentConfig& config, const DatasetHandle& data);

struct TrainOutcome {
  std::string output_dir;
  std::vector<EpochRecord> trace;
};

/// Trains, writing the checkpoint after every epoch plus trace.csv and the
/// resolved config. With `resume`, continues from an existing checkpoint whose
/// spec hash matches. Throws DivergenceError after saving the last good state.
TrainOutcome cmd_train(const ExperimentConfig& config, std::ostream& log, bool resume = false);

/// A model restored from a checkpoint.
struct LoadedRun {
  ExperimentConfig config;
  Checkpoint checkpoint;
  Model model;
};
LoadedRun load_run(const std::string& checkpoint_path);

/// Evaluates on the test split of `data` (the training config's dataset when
/// absent) with `samples` MC passes (config default when 0).
MetricsReport cmd_eval(const std::string& checkpoint_path, const std::optional<DatasetConfig>& data,
                       std::size_t samples, const std::string& out_dir, std::ostream& log);

/// Max-softmax OOD detection: the training dataset's test split is
/// in-distribution, the test split of `out_data` is out-of-distribution.
MetricsReport cmd_ood(const std::string& checkpoint_path, const DatasetConfig& out_data, std::size_t samples,
                      const std::string& out_dir, std::ostream& log);

/// Spectral norm and stable rank of every weight, and the structured-dropout
/// regularizer of every VSD dense layer on test rows.
MetricsReport cmd_diagnose(const std::string& checkpoint_path, const std::string& out_dir, std::ostream& log);

/// Built-in oracle checks. Prints one PASS/FAIL line each; returns true when all pass.
bool cmd_verify(std::ostream& out);

}  // namespace vsd
