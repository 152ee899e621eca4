#include "vsd/kl.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace vsd {

namespace {

void require_positive(const Tensor& t, const char* what) {
  for (double v : t.values()) {
    if (!(v > 0.0)) throw DomainError(std::string(what) + " must be positive");
  }
}

void require_square(const Tensor& u, std::size_t k) {
  if (u.rank() != 2 || u.rows() != k || u.cols() != k) {
    throw ShapeError("U must be " + std::to_string(k) + "x" + std::to_string(k) + ", got " +
                     shape_to_string(u.shape()));
  }
}

// log((1 + sum_j alpha_j U_ij^2) / alpha_i) as a length-K Var.
Var eb_log_ratio(const Var& alpha, const Var& u) {
  const std::size_t k = alpha.value().size();
  require_positive(alpha.value(), "alpha");
  require_square(u.value(), k);
  Var a = reshape(alpha, {k});
  Var mixed = reshape(matmul(square(u), reshape(alpha, {k, 1})), {k});
  return log((mixed + 1.0) / a);
}

double lgamma_checked(double a) {
  if (!(a > 0.0)) throw DomainError("hyperprior shape a must be positive");
  return std::lgamma(a);
}

template <typename F>
double evaluate(F&& f) {
  Tape tape(false);
  return f(tape).item();
}

}  // namespace

Var kl_eb_vsd(const Var& alpha, const Var& u, std::size_t columns) {
  return sum(eb_log_ratio(alpha, u)) * (0.5 * static_cast<double>(columns));
}

double kl_eb_vsd(const Tensor& alpha, const Tensor& u, std::size_t columns) {
  return evaluate([&](Tape& t) { return kl_eb_vsd(t.constant(alpha), t.constant(u), columns); });
}

Var kl_ard(const Var& alpha) {
  require_positive(alpha.value(), "alpha");
  return 0.5 * sum(log(1.0 + 1.0 / alpha));
}

double kl_ard(const Tensor& alpha) {
  return evaluate([&](Tape& t) { return kl_ard(t.constant(alpha)); });
}

double kl_full(const Tensor& alpha, const Tensor& u, const Tensor& theta, const Tensor& beta) {
  const std::size_t k = alpha.size();
  require_positive(alpha, "alpha");
  require_positive(beta, "beta");
  require_square(u, k);
  if (theta.rank() != 2 || theta.rows() != k || beta.shape() != theta.shape()) {
    throw ShapeError("kl_full: theta and beta must both be " + std::to_string(k) + "xQ");
  }
  for (double v : theta.values()) {
    if (v == 0.0) throw DomainError("kl_full: Theta has a zero entry; the column covariance is singular");
  }
  const std::size_t q = theta.cols();
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    double mixed = 0.0;
    for (std::size_t j = 0; j < k; ++j) mixed += alpha[j] * u(i, j) * u(i, j);
    for (std::size_t c = 0; c < q; ++c) {
      const double th2 = theta(i, c) * theta(i, c);
      const double b = beta(i, c);
      total += -std::log(b) - std::log(alpha[i] * th2) - 1.0 + b * th2 * (1.0 + mixed);
    }
  }
  return 0.5 * total;
}

Tensor empirical_bayes_beta(const Tensor& theta, const Tensor& alpha, const Tensor& u) {
  const std::size_t k = alpha.size();
  require_square(u, k);
  if (theta.rank() != 2 || theta.rows() != k) throw ShapeError("empirical_bayes_beta: theta must be KxQ");
  Tensor beta(theta.shape());
  for (std::size_t i = 0; i < k; ++i) {
    double mixed = 0.0;
    for (std::size_t j = 0; j < k; ++j) mixed += alpha[j] * u(i, j) * u(i, j);
    for (std::size_t c = 0; c < theta.cols(); ++c) {
      const double th = theta(i, c);
      if (th == 0.0) throw DomainError("empirical_bayes_beta: Theta has a zero entry");
      beta(i, c) = 1.0 / (th * th * (1.0 + mixed));
    }
  }
  return beta;
}

Var kl_lognormal_gamma(const Var& gamma, const Var& delta, double a, double b) {
  require_positive(delta.value(), "delta");
  if (!(b > 0.0)) throw DomainError("hyperprior scale b must be positive");
  const double k = static_cast<double>(gamma.value().size());
  const double constant = k * (-a * std::log(b) + lgamma_checked(a) - 0.5 * (1.0 + std::log(2.0 * std::numbers::pi)));
  Var per_dim = a * gamma + b * exp(0.5 * delta - gamma) - 0.5 * log(delta);
  return sum(per_dim) + constant;
}

double kl_lognormal_gamma(const Tensor& gamma, const Tensor& delta, double a, double b) {
  return evaluate([&](Tape& t) { return kl_lognormal_gamma(t.constant(gamma), t.constant(delta), a, b); });
}

Var kl_hier_eb_expected(const Var& alpha, const Var& u, const Var& gamma, const Var& delta,
                        std::size_t columns) {
  require_positive(delta.value(), "delta");
  const std::size_t k = alpha.value().size();
  if (gamma.value().size() != k || delta.value().size() != k) {
    throw ShapeError("kl_hier_eb_expected: gamma and delta must have length K");
  }
  Var g = reshape(gamma, {k});
  Var d = reshape(delta, {k});
  Var z_term = exp(g + 0.5 * d) - g - 1.0;
  return sum(z_term + eb_log_ratio(alpha, u)) * (0.5 * static_cast<double>(columns));
}

double kl_hier_eb_expected(const Tensor& alpha, const Tensor& u, const Tensor& gamma, const Tensor& delta,
                           std::size_t columns) {
  return evaluate([&](Tape& t) {
    return kl_hier_eb_expected(t.constant(alpha), t.constant(u), t.constant(gamma), t.constant(delta), columns);
  });
}

Var kl_gaussian_mean_field(const Var& mu, const Var& sigma, double prior_sigma) {
  require_positive(sigma.value(), "sigma");
  if (!(prior_sigma > 0.0)) throw DomainError("prior sigma must be positive");
  const double inv2 = 1.0 / (2.0 * prior_sigma * prior_sigma);
  Var per = std::log(prior_sigma) - log(sigma) + (square(sigma) + square(mu)) * inv2 - 0.5;
  return sum(per);
}

double kl_gaussian_mean_field(const Tensor& mu, const Tensor& sigma, double prior_sigma) {
  return evaluate([&](Tape& t) { return kl_gaussian_mean_field(t.constant(mu), t.constant(sigma), prior_sigma); });
}

namespace {
constexpr double kVdC1 = 1.16145124;
constexpr double kVdC2 = -1.50204118;
constexpr double kVdC3 = 0.58629921;
}  // namespace

Var kl_vd_log_uniform(const Var& alpha) {
  require_positive(alpha.value(), "alpha");
  const double k = static_cast<double>(alpha.value().size());
  Var neg_kl = 0.5 * log(alpha) + kVdC1 * alpha + kVdC2 * square(alpha) + kVdC3 * alpha * square(alpha);
  return k * (kVdC1 + kVdC2 + kVdC3) - sum(neg_kl);
}

double kl_vd_log_uniform(const Tensor& alpha) {
  return evaluate([&](Tape& t) { return kl_vd_log_uniform(t.constant(alpha)); });
}

}  // namespace vsd
