#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vsd/tensor.hpp"

namespace vsd {

inline constexpr int kSchemaVersion = 1;
inline constexpr double kProbabilityFloor = 1e-12;
inline constexpr std::size_t kDefaultEceBins = 15;

/// Mean of -log p at the true labels. Probabilities below 1e-12 are clamped;
/// the number of clamped rows is written to `clamped` when given.
double nll(const Tensor& probs, std::span<const int> labels, std::size_t* clamped = nullptr);

/// Fraction of rows whose argmax (first maximum) differs from the label.
double error_rate(const Tensor& probs, std::span<const int> labels);

/// Largest probability of each row.
std::vector<double> max_probability(const Tensor& probs);

struct CalibrationBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  double accuracy = 0.0;    // 0 for empty bins
  double confidence = 0.0;  // 0 for empty bins
};

/// Confidence bins ((m-1)/M, m/M]; a confidence of exactly 0 goes to the first bin.
std::vector<CalibrationBin> calibration_bins(const Tensor& probs, std::span<const int> labels,
                                             std::size_t bins = kDefaultEceBins);
double ece(const Tensor& probs, std::span<const int> labels, std::size_t bins = kDefaultEceBins);

/// Shannon entropy of each row in nats. `per_class` divides by the class count.
std::vector<double> row_entropy(const Tensor& probs, bool per_class = false);

struct EntropyReport {
  std::vector<double> entropies;
  double mean = 0.0;
  std::vector<double> bin_edges;    // bins + 1 edges over [0, max entropy]
  std::vector<std::size_t> counts;  // last bin is closed on the right
  std::vector<double> cdf;          // fraction of rows with entropy <= bin_edges[i + 1]
};

EntropyReport predictive_entropy(const Tensor& probs, bool per_class = false, std::size_t bins = 20);

struct OodMetrics {
  double auroc = 0.0;
  double aupr_in = 0.0;
  double aupr_out = 0.0;
  double fpr_at_95_tpr = 0.0;
  double detection_error = 0.0;
};

/// In-distribution is the positive class and higher scores mean "more in".
/// AUROC counts ties as one half. AUPR integrates precision over recall with
/// the trapezoid rule from the point (recall 0, precision 1); AUPR-out negates
/// the scores and treats out-of-distribution as positive.
OodMetrics ood_metrics(std::span<const double> scores_in, std::span<const double> scores_out);

struct RegressionMetrics {
  double rmse = 0.0;
  double gaussian_pred_ll = 0.0;  // mean per-entry log N(target; mean, var)
};

RegressionMetrics regression_metrics(const Tensor& mean, const Tensor& variance, const Tensor& targets);

struct MetricsReport {
  std::string task;
  std::optional<double> nll;
  std::optional<double> error_rate;
  std::optional<double> ece;
  std::optional<double> mean_predictive_entropy;
  std::optional<EntropyReport> entropy;
  std::optional<OodMetrics> ood;
  std::optional<RegressionMetrics> regression;
  nlohmann::ordered_json diagnostics;  // null unless diagnostics ran

  nlohmann::ordered_json to_json() const;
  /// "metric,value" rows for every scalar present, in the JSON key order.
  std::string to_csv() const;
};

/// Histogram and CDF table as CSV: bin_lower,bin_upper,count,cdf.
std::string entropy_csv(const EntropyReport& report);

/// Reliability table as CSV: bin_lower,bin_upper,count,accuracy,confidence.
std::string calibration_csv(const std::vector<CalibrationBin>& bins);

}  // namespace vsd
