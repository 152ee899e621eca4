#include "vsd/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace vsd {

namespace {

void check_probs(const Tensor& probs, std::size_t labels) {
  if (probs.rank() != 2) throw ShapeError("probabilities must be [n x C]");
  if (probs.rows() != labels) throw ShapeError("probabilities and labels differ in length");
}

void check_label(int y, std::size_t classes) {
  if (y < 0 || static_cast<std::size_t>(y) >= classes) {
    throw std::out_of_range("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
  }
}

std::size_t argmax_row(const Tensor& probs, std::size_t r) {
  const std::size_t c = probs.cols();
  const double* row = probs.data() + r * c;
  return static_cast<std::size_t>(std::max_element(row, row + c) - row);
}

std::string fmt(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, p);
}

// Threshold sweep over distinct scores in descending order. For each cut
// "predict positive when score >= t" calls visit(tp, fp).
template <typename Visit>
void sweep(std::span<const double> pos, std::span<const double> neg, Visit&& visit) {
  std::vector<std::pair<double, bool>> all;
  all.reserve(pos.size() + neg.size());
  for (double s : pos) all.emplace_back(s, true);
  for (double s : neg) all.emplace_back(s, false);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < all.size();) {
    const double t = all[i].first;
    while (i < all.size() && all[i].first == t) {
      (all[i].second ? tp : fp)++;
      ++i;
    }
    visit(tp, fp);
  }
}

double aupr(std::span<const double> pos, std::span<const double> neg) {
  const double p = static_cast<double>(pos.size());
  double area = 0.0, prev_recall = 0.0, prev_precision = 1.0;
  sweep(pos, neg, [&](std::size_t tp, std::size_t fp) {
    const double recall = static_cast<double>(tp) / p;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    area += (recall - prev_recall) * 0.5 * (precision + prev_precision);
    prev_recall = recall;
    prev_precision = precision;
  });
  return area;
}

void check_scores(std::span<const double> s, const char* what) {
  if (s.empty()) throw std::invalid_argument(std::string(what) + " scores are empty");
  for (double v : s) {
    if (std::isnan(v)) throw DomainError(std::string(what) + " scores contain NaN");
  }
}

}  // namespace

double nll(const Tensor& probs, std::span<const int> labels, std::size_t* clamped) {
  check_probs(probs, labels.size());
  if (labels.empty()) throw std::invalid_argument("nll: no rows");
  const std::size_t c = probs.cols();
  double total = 0.0;
  std::size_t n_clamped = 0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    check_label(labels[r], c);
    double p = probs(r, static_cast<std::size_t>(labels[r]));
    if (p < kProbabilityFloor) {
      p = kProbabilityFloor;
      ++n_clamped;
    }
    total -= std::log(p);
  }
  if (clamped != nullptr) *clamped = n_clamped;
  return total / static_cast<double>(labels.size());
}

double error_rate(const Tensor& probs, std::span<const int> labels) {
  check_probs(probs, labels.size());
  if (labels.empty()) throw std::invalid_argument("error_rate: no rows");
  std::size_t wrong = 0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    check_label(labels[r], probs.cols());
    if (argmax_row(probs, r) != static_cast<std::size_t>(labels[r])) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(labels.size());
}

std::vector<double> max_probability(const Tensor& probs) {
  if (probs.rank() != 2) throw ShapeError("probabilities must be [n x C]");
  std::vector<double> out(probs.rows());
  for (std::size_t r = 0; r < probs.rows(); ++r) out[r] = probs(r, argmax_row(probs, r));
  return out;
}

std::vector<CalibrationBin> calibration_bins(const Tensor& probs, std::span<const int> labels, std::size_t bins) {
  check_probs(probs, labels.size());
  if (bins == 0) throw std::invalid_argument("ece: bin count must be at least 1");
  const double m = static_cast<double>(bins);
  std::vector<CalibrationBin> out(bins);
  std::vector<double> correct(bins, 0.0), conf_sum(bins, 0.0);
  for (std::size_t b = 0; b < bins; ++b) {
    out[b].lower = static_cast<double>(b) / m;
    out[b].upper = static_cast<double>(b + 1) / m;
  }
  for (std::size_t r = 0; r < labels.size(); ++r) {
    check_label(labels[r], probs.cols());
    const std::size_t pred = argmax_row(probs, r);
    const double conf = probs(r, pred);
    const double raw = std::ceil(conf * m) - 1.0;
    std::size_t b = raw <= 0.0 ? 0 : std::min(bins - 1, static_cast<std::size_t>(raw));
    // conf * m can round across an edge; settle against the edges themselves.
    while (b + 1 < bins && conf > out[b].upper) ++b;
    while (b > 0 && conf <= out[b].lower) --b;
    out[b].count++;
    conf_sum[b] += conf;
    if (pred == static_cast<std::size_t>(labels[r])) correct[b] += 1.0;
  }
  for (std::size_t b = 0; b < bins; ++b) {
    if (out[b].count == 0) continue;
    const double cnt = static_cast<double>(out[b].count);
    out[b].accuracy = correct[b] / cnt;
    out[b].confidence = conf_sum[b] / cnt;
  }
  return out;
}

double ece(const Tensor& probs, std::span<const int> labels, std::size_t bins) {
  if (labels.empty()) throw std::invalid_argument("ece: no rows");
  const double n = static_cast<double>(labels.size());
  double total = 0.0;
  for (const CalibrationBin& b : calibration_bins(probs, labels, bins)) {
    if (b.count > 0) total += static_cast<double>(b.count) / n * std::abs(b.accuracy - b.confidence);
  }
  return total;
}

std::vector<double> row_entropy(const Tensor& probs, bool per_class) {
  if (probs.rank() != 2) throw ShapeError("probabilities must be [n x C]");
  const std::size_t c = probs.cols();
  std::vector<double> out(probs.rows(), 0.0);
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    double h = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double p = probs(r, j);
      if (p > 0.0) h -= p * std::log(p);
    }
    out[r] = std::max(0.0, per_class ? h / static_cast<double>(c) : h);
  }
  return out;
}

EntropyReport predictive_entropy(const Tensor& probs, bool per_class, std::size_t bins) {
  if (bins == 0) throw std::invalid_argument("entropy histogram needs at least one bin");
  EntropyReport rep;
  rep.entropies = row_entropy(probs, per_class);
  const double c = static_cast<double>(probs.cols());
  const double top = per_class ? std::log(c) / c : std::log(c);
  const double width = top > 0.0 ? top / static_cast<double>(bins) : 1.0;
  rep.bin_edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) rep.bin_edges[i] = width * static_cast<double>(i);
  rep.counts.assign(bins, 0);
  for (double h : rep.entropies) {
    const auto b = static_cast<std::size_t>(h / width);
    rep.counts[std::min(b, bins - 1)]++;
  }
  const double n = static_cast<double>(rep.entropies.size());
  rep.mean = n > 0 ? std::accumulate(rep.entropies.begin(), rep.entropies.end(), 0.0) / n : 0.0;
  rep.cdf.resize(bins);
  std::vector<double> sorted = rep.entropies;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < bins; ++i) {
    const double edge = i + 1 == bins ? std::numeric_limits<double>::infinity() : rep.bin_edges[i + 1];
    const auto le = std::upper_bound(sorted.begin(), sorted.end(), edge) - sorted.begin();
    rep.cdf[i] = n > 0 ? static_cast<double>(le) / n : 0.0;
  }
  return rep;
}

OodMetrics ood_metrics(std::span<const double> scores_in, std::span<const double> scores_out) {
  check_scores(scores_in, "in-distribution");
  check_scores(scores_out, "out-of-distribution");
  const double n_in = static_cast<double>(scores_in.size());
  const double n_out = static_cast<double>(scores_out.size());
  OodMetrics m;

  // Mann-Whitney with mid-ranks for ties.
  std::vector<std::pair<double, bool>> all;
  for (double s : scores_in) all.emplace_back(s, true);
  for (double s : scores_out) all.emplace_back(s, false);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (all[k].second) rank_sum += mid;
    }
    i = j;
  }
  m.auroc = (rank_sum - n_in * (n_in + 1.0) / 2.0) / (n_in * n_out);

  m.fpr_at_95_tpr = 1.0;
  sweep(scores_in, scores_out, [&](std::size_t tp, std::size_t fp) {
    const double tpr = static_cast<double>(tp) / n_in;
    if (tpr >= 0.95) m.fpr_at_95_tpr = std::min(m.fpr_at_95_tpr, static_cast<double>(fp) / n_out);
  });

  m.aupr_in = aupr(scores_in, scores_out);
  std::vector<double> neg_in(scores_in.size()), neg_out(scores_out.size());
  std::transform(scores_in.begin(), scores_in.end(), neg_in.begin(), [](double s) { return -s; });
  std::transform(scores_out.begin(), scores_out.end(), neg_out.begin(), [](double s) { return -s; });
  m.aupr_out = aupr(neg_out, neg_in);

  // Threshold delta: "in" iff q > delta. Candidates are -inf and every score.
  std::vector<double> in_sorted(scores_in.begin(), scores_in.end());
  std::vector<double> out_sorted(scores_out.begin(), scores_out.end());
  std::sort(in_sorted.begin(), in_sorted.end());
  std::sort(out_sorted.begin(), out_sorted.end());
  m.detection_error = 0.5;  // delta = -inf: every in accepted, every out accepted
  auto consider = [&](double delta) {
    const double in_le = static_cast<double>(std::upper_bound(in_sorted.begin(), in_sorted.end(), delta) - in_sorted.begin());
    const double out_gt = static_cast<double>(out_sorted.end() - std::upper_bound(out_sorted.begin(), out_sorted.end(), delta));
    // One division keeps the result correctly rounded.
    m.detection_error = std::min(m.detection_error, (in_le * n_out + out_gt * n_in) / (2.0 * n_in * n_out));
  };
  for (double d : in_sorted) consider(d);
  for (double d : out_sorted) consider(d);
  return m;
}

RegressionMetrics regression_metrics(const Tensor& mean, const Tensor& variance, const Tensor& targets) {
  if (mean.shape() != variance.shape() || mean.shape() != targets.shape()) {
    throw ShapeError("regression metrics: mean, variance and targets must share a shape");
  }
  if (mean.size() == 0) throw std::invalid_argument("regression metrics: no rows");
  double se = 0.0, ll = 0.0;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    const double v = variance[i];
    if (!(v > 0.0)) throw DomainError("regression metrics: predictive variance must be positive");
    const double r = targets[i] - mean[i];
    se += r * r;
    ll += -0.5 * std::log(2.0 * std::numbers::pi * v) - 0.5 * r * r / v;
  }
  const double n = static_cast<double>(mean.size());
  return {std::sqrt(se / n), ll / n};
}

nlohmann::ordered_json MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["schema_version"] = kSchemaVersion;
  j["task"] = task;
  if (nll) j["nll"] = *nll;
  if (error_rate) j["error_rate"] = *error_rate;
  if (ece) j["ece"] = *ece;
  if (mean_predictive_entropy) j["mean_predictive_entropy"] = *mean_predictive_entropy;
  if (ood) {
    j["auroc"] = ood->auroc;
    j["aupr_in"] = ood->aupr_in;
    j["aupr_out"] = ood->aupr_out;
    j["fpr_at_95_tpr"] = ood->fpr_at_95_tpr;
    j["detection_error"] = ood->detection_error;
  }
  if (regression) {
    j["rmse"] = regression->rmse;
    j["gaussian_pred_ll"] = regression->gaussian_pred_ll;
  }
  if (entropy) {
    j["entropy_histogram"] = {{"bin_edges", entropy->bin_edges}, {"counts", entropy->counts}, {"cdf", entropy->cdf}};
  }
  if (!diagnostics.is_null()) j["diagnostics"] = diagnostics;
  return j;
}

std::string MetricsReport::to_csv() const {
  std::string out = "metric,value\n";
  auto row = [&](const char* k, double v) { out += std::string(k) + "," + fmt(v) + "\n"; };
  row("schema_version", kSchemaVersion);
  if (nll) row("nll", *nll);
  if (error_rate) row("error_rate", *error_rate);
  if (ece) row("ece", *ece);
  if (mean_predictive_entropy) row("mean_predictive_entropy", *mean_predictive_entropy);
  if (ood) {
    row("auroc", ood->auroc);
    row("aupr_in", ood->aupr_in);
    row("aupr_out", ood->aupr_out);
    row("fpr_at_95_tpr", ood->fpr_at_95_tpr);
    row("detection_error", ood->detection_error);
  }
  if (regression) {
    row("rmse", regression->rmse);
    row("gaussian_pred_ll", regression->gaussian_pred_ll);
  }
  return out;
}

std::string entropy_csv(const EntropyReport& report) {
  std::string out = "bin_lower,bin_upper,count,cdf\n";
  for (std::size_t i = 0; i < report.counts.size(); ++i) {
    out += fmt(report.bin_edges[i]) + "," + fmt(report.bin_edges[i + 1]) + "," + std::to_string(report.counts[i]) +
           "," + fmt(report.cdf[i]) + "\n";
  }
  return out;
}

std::string calibration_csv(const std::vector<CalibrationBin>& bins) {
  std::string out = "bin_lower,bin_upper,count,accuracy,confidence\n";
  for (const CalibrationBin& b : bins) {
    out += fmt(b.lower) + "," + fmt(b.upper) + "," + std::to_string(b.count) + "," + fmt(b.accuracy) + "," +
           fmt(b.confidence) + "\n";
  }
  return out;
}

}  // namespace vsd
