#pragma once

// Independent reference computations for the tests. Nothing here calls into
// the library's numerical code except Tensor storage.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "vsd/tensor.hpp"

namespace oracle {

inline Eigen::MatrixXd to_eigen(const vsd::Tensor& t) {
  const std::size_t r = t.rank() == 1 ? t.size() : t.rows();
  const std::size_t c = t.rank() == 1 ? 1 : t.cols();
  Eigen::MatrixXd m(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m(i, j) = t.data()[i * c + j];
  return m;
}

inline vsd::Tensor from_eigen(const Eigen::MatrixXd& m) {
  vsd::Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) t(i, j) = m(i, j);
  return t;
}

// KL(N(m0, S0) || N(m1, S1)) for dense covariances.
inline double gaussian_kl(const Eigen::VectorXd& m0, const Eigen::MatrixXd& s0, const Eigen::VectorXd& m1,
                          const Eigen::MatrixXd& s1) {
  const Eigen::LLT<Eigen::MatrixXd> l0(s0), l1(s1);
  const double logdet0 = 2.0 * l0.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double logdet1 = 2.0 * l1.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const Eigen::VectorXd d = m1 - m0;
  const double trace = l1.solve(s0).trace();
  return 0.5 * (trace + d.dot(l1.solve(d)) - static_cast<double>(m0.size()) + logdet1 - logdet0);
}

// Column covariance diag(t) U diag(alpha) U^T diag(t).
inline Eigen::MatrixXd column_covariance(const Eigen::VectorXd& t, const Eigen::MatrixXd& u,
                                         const Eigen::VectorXd& alpha) {
  const Eigen::MatrixXd vu = t.asDiagonal() * u;
  return vu * alpha.asDiagonal() * vu.transpose();
}

inline double largest_singular_value(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()(0);
}

// ---- metric references by exhaustive enumeration --------------------------

// P(score_in > score_out) + 0.5 P(tie) over all pairs.
inline double auroc_pairs(const std::vector<double>& in, const std::vector<double>& out) {
  double s = 0.0;
  for (double a : in)
    for (double b : out) s += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
  return s / static_cast<double>(in.size() * out.size());
}

struct Roc {
  double tpr, fpr, precision, recall;
};

// Operating points of the rule "predict positive when score >= t" for every
// distinct score t, from the highest threshold down.
inline std::vector<Roc> operating_points(const std::vector<double>& pos, const std::vector<double>& neg) {
  std::vector<double> thresholds(pos);
  thresholds.insert(thresholds.end(), neg.begin(), neg.end());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  std::vector<Roc> pts;
  for (double t : thresholds) {
    double tp = 0, fp = 0;
    for (double p : pos) tp += p >= t;
    for (double n : neg) fp += n >= t;
    const double tpr = tp / static_cast<double>(pos.size());
    pts.push_back({tpr, fp / static_cast<double>(neg.size()), tp / (tp + fp), tpr});
  }
  return pts;
}

// Trapezoid area under precision-recall from (0, 1).
inline double aupr(const std::vector<double>& pos, const std::vector<double>& neg) {
  double area = 0.0, r0 = 0.0, p0 = 1.0;
  for (const Roc& p : operating_points(pos, neg)) {
    area += (p.recall - r0) * (p.precision + p0) / 2.0;
    r0 = p.recall;
    p0 = p.precision;
  }
  return area;
}

inline double fpr_at_95(const std::vector<double>& pos, const std::vector<double>& neg) {
  double best = 1.0;
  for (const Roc& p : operating_points(pos, neg))
    if (p.tpr >= 0.95) best = std::min(best, p.fpr);
  return best;
}

// min over thresholds (including "everything positive" and "nothing
// positive") of 0.5 (1 - TPR) + 0.5 FPR.
// Counts are combined into one fraction so the value is correctly rounded.
inline double detection_error(const std::vector<double>& pos, const std::vector<double>& neg) {
  const double np = static_cast<double>(pos.size()), nn = static_cast<double>(neg.size());
  double best = 0.5;  // nothing positive
  std::vector<double> thresholds(pos);
  thresholds.insert(thresholds.end(), neg.begin(), neg.end());
  for (double t : thresholds) {
    double missed = 0, accepted = 0;
    for (double s : pos) missed += s < t;
    for (double s : neg) accepted += s >= t;
    best = std::min(best, (missed * nn + accepted * np) / (2.0 * np * nn));
  }
  return best;
}

// ECE straight from the definition: sum over bins of |B|/n |acc(B) - conf(B)|
// with bins ((m-1)/M, m/M].
inline double ece(const std::vector<double>& conf, const std::vector<bool>& correct, int bins) {
  double total = 0.0;
  for (int m = 1; m <= bins; ++m) {
    const double lo = static_cast<double>(m - 1) / bins, hi = static_cast<double>(m) / bins;
    double n = 0, acc = 0, c = 0;
    for (std::size_t i = 0; i < conf.size(); ++i) {
      const bool inside = (conf[i] > lo && conf[i] <= hi) || (m == 1 && conf[i] == 0.0);
      if (!inside) continue;
      n += 1;
      acc += correct[i];
      c += conf[i];
    }
    if (n > 0) total += n / static_cast<double>(conf.size()) * std::abs(acc / n - c / n);
  }
  return total;
}

}  // namespace oracle
