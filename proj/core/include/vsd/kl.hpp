#pragma once

#include <cstddef>

#include "vsd/autograd.hpp"

namespace vsd {

// Closed-form KL terms for structured multiplicative noise xi ~ N(1, U diag(alpha) U^T)
// injected as W = diag(xi) Theta, with Theta of shape [K x Q].
//
// The differentiable overloads take Vars; the Tensor overloads evaluate the
// same expression on a throwaway tape. alpha, gamma and delta are length-K.

/// Empirical-Bayes KL summed over Q columns:
///   (Q/2) sum_i log((1 + sum_j alpha_j U_ij^2) / alpha_i).
/// It does not depend on Theta. Throws DomainError for non-positive alpha.
Var kl_eb_vsd(const Var& alpha, const Var& u, std::size_t columns);
double kl_eb_vsd(const Tensor& alpha, const Tensor& u, std::size_t columns);

/// ARD prior with empirical-Bayes variance: 0.5 sum_i log(1 + 1/alpha_i).
Var kl_ard(const Var& alpha);
double kl_ard(const Tensor& alpha);

/// Exact KL(q(W_:j) || N(0, diag(1/beta_:j))) summed over columns, with
/// q(W_:j) = N(Theta_:j, diag(Theta_:j) U diag(alpha) U^T diag(Theta_:j)).
/// Throws DomainError on zero Theta entries or non-positive beta/alpha.
double kl_full(const Tensor& alpha, const Tensor& u, const Tensor& theta, const Tensor& beta);

/// beta*_ij = 1 / (Theta_ij^2 (1 + sum_k alpha_k U_ik^2)), the minimiser of kl_full over beta.
Tensor empirical_bayes_beta(const Tensor& theta, const Tensor& alpha, const Tensor& u);

/// KL(LogNormal(gamma, delta) || InvGamma(a, b)) summed over dimensions:
///   -a log b + lgamma(a) + a gamma + b exp(-gamma + delta/2) - (log delta + 1 + log 2 pi)/2.
/// delta is the variance of log z.
Var kl_lognormal_gamma(const Var& gamma, const Var& delta, double a, double b);
double kl_lognormal_gamma(const Tensor& gamma, const Tensor& delta, double a, double b);

/// E_{z ~ LogNormal(gamma, delta)} of the hierarchical empirical-Bayes KL,
///   (Q/2) sum_i [exp(gamma_i + delta_i/2) - gamma_i - 1 + log((1 + sum_j alpha_j U_ij^2) / alpha_i)].
/// Reduces to kl_eb_vsd when z collapses to 1 (gamma = 0, delta -> 0).
Var kl_hier_eb_expected(const Var& alpha, const Var& u, const Var& gamma, const Var& delta,
                        std::size_t columns);
double kl_hier_eb_expected(const Tensor& alpha, const Tensor& u, const Tensor& gamma, const Tensor& delta,
                           std::size_t columns);

/// Mean-field Gaussian weights N(mu, sigma^2) against the prior N(0, prior_sigma^2).
Var kl_gaussian_mean_field(const Var& mu, const Var& sigma, double prior_sigma);
double kl_gaussian_mean_field(const Tensor& mu, const Tensor& sigma, double prior_sigma);

/// Approximate KL of Gaussian dropout noise against the log-uniform prior,
/// -(0.5 log a + c1 a + c2 a^2 + c3 a^3) summed over units, shifted so it is 0 at alpha = 1.
Var kl_vd_log_uniform(const Var& alpha);
double kl_vd_log_uniform(const Tensor& alpha);

}  // namespace vsd
