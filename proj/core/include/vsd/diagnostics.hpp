#pragma once

#include <cstddef>
#include <vector>

#include "vsd/network.hpp"

namespace vsd {

/// Per-example loss used by the dropout regularizer.
/// SquaredError is |f - y|^2 and CrossEntropy is -log softmax(f)_y. The output
/// curvature H_out is half the loss Hessian in f: I for squared error and
/// (diag p - p p^T)/2 for cross-entropy.
enum class RegLoss { SquaredError, CrossEntropy };

/// Noise enters at the input of dense layer `layer`: its input h becomes
/// h * xi with xi = 1 + U (sqrt(alpha) * eps), one xi per example. Every layer
/// runs deterministically otherwise.
struct RegularizerProblem {
  Network* network = nullptr;
  std::size_t layer = 0;
  Tensor x;
  Tensor targets;           // squared error: [n x outputs]
  std::vector<int> labels;  // cross-entropy
  RegLoss loss = RegLoss::SquaredError;
};

/// Monte-Carlo estimate of mean_n E_xi[l(f(h_n * xi))] - l(f(h_n)). Draws come
/// in antithetic pairs (eps, -eps), so `samples` is rounded up to an even count.
/// alpha = 0 gives exactly 0.
double regularizer_mc(const RegularizerProblem& problem, const Tensor& alpha, const Tensor& u,
                      std::size_t samples, Rng& rng);

/// Gauss-Newton form mean_n <J_n^T H_out J_n, diag(h_n) U diag(alpha) U^T diag(h_n)>,
/// with J_n the Jacobian of the outputs in the layer input, taken by the tape.
double regularizer_analytic(const RegularizerProblem& problem, const Tensor& alpha, const Tensor& u);

/// mean_n |H_out^(1/2) J_n diag(h_n) U diag(alpha)^(1/2)|_F^2.
double regularizer_tikhonov(const RegularizerProblem& problem, const Tensor& alpha, const Tensor& u);

/// sum_k alpha_k U_:k^T Omega U_:k with Omega = mean_n diag(h_n) J_n^T H_out J_n diag(h_n).
double regularizer_column_sum(const RegularizerProblem& problem, const Tensor& alpha, const Tensor& u);

struct RegularizerEstimate {
  double mc_value = 0.0;
  double analytic_value = 0.0;
  double noise_scale = 0.0;  // mean alpha
};

RegularizerEstimate estimate_regularizer(const RegularizerProblem& problem, const Tensor& alpha, const Tensor& u,
                                         std::size_t samples, Rng& rng);

/// Largest singular value by power iteration on W^T W. Tensors of rank > 2
/// are viewed as [dim0 x rest]. A zero matrix gives 0.
double spectral_norm(const Tensor& w, std::size_t iters = 1000, double tol = 1e-13);

/// |W|_F^2 / |W|_2^2. Throws DomainError for a zero matrix.
double stable_rank(const Tensor& w);

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Columns of `vectors` are the eigenvectors.
struct SymmetricEigen {
  Tensor values;
  Tensor vectors;
};
SymmetricEigen symmetric_eigen(const Tensor& a);

}  // namespace vsd
