#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vsd/inference.hpp"

namespace vsd {

/// Malformed or inconsistent input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetConfig {
  /// synthetic-cubic | synthetic-two-cluster | synthetic-moons |
  /// csv-regression | csv-classification | idx-images
  std::string source = "synthetic-cubic";
  std::string path;              // CSV file, or IDX image file
  std::string labels_path;       // IDX label file
  std::string test_path;         // optional separate test file (CSV or IDX images)
  std::string test_labels_path;  // IDX test labels
  std::string target_column;     // CSV; empty = last column
  std::size_t n_train = 0;       // synthetic sizes; 0 = source default
  std::size_t n_test = 0;
  double test_fraction = 0.2;    // held-out share when there is no test file
  double noise = -1.0;           // synthetic noise std; < 0 = source default
  std::uint64_t seed = 0;        // generation and split seed
  std::size_t split_index = 0;   // selects one of several random splits
  bool normalize = true;
};

/// Training-split statistics. Inputs are standardized per feature (tabular)
/// or with one scalar (images, after scaling to [0, 1]); regression targets
/// are standardized per output.
struct Normalization {
  std::vector<double> x_mean;
  std::vector<double> x_std;
  std::vector<double> y_mean;
  std::vector<double> y_std;
  double x_scale = 1.0;  // applied before standardizing (1/255 for images)

  nlohmann::json to_json() const;
  static Normalization from_json(const nlohmann::json& j);
};

struct DatasetHandle {
  std::string source;
  Batch train;  // normalized
  Batch test;   // normalized with the training statistics
  Shape input_shape;
  std::size_t classes = 0;  // 0 for regression
  Normalization norm;

  bool regression() const noexcept { return classes == 0; }
};

/// Loads and normalizes a dataset. With `fixed`, those statistics are used
/// instead of ones computed from the training split.
DatasetHandle load_dataset(const DatasetConfig& config, const Normalization* fixed = nullptr);

/// Applies input normalization to raw inputs [n x ...].
Tensor normalize_inputs(const Tensor& x, const Normalization& norm);
/// Maps standardized regression outputs back to target units.
RegressionPrediction denormalize(const RegressionPrediction& pred, const Normalization& norm);
Tensor denormalize_targets(const Tensor& y, const Normalization& norm);

/// Parses a CSV with a header row. Returns features [n x d] and the target column.
struct CsvTable {
  std::vector<std::string> header;
  Tensor features;
  std::vector<double> target;
};
CsvTable read_csv(const std::string& path, const std::string& target_column);

/// IDX (MNIST-style) unsigned-byte files.
Tensor read_idx_images(const std::string& path);
std::vector<int> read_idx_labels(const std::string& path);

}  // namespace vsd
