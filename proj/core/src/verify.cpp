#include <cmath>
#include <functional>
#include <numbers>

#include "vsd/commands.hpp"
#include "vsd/diagnostics.hpp"
#include "vsd/kl.hpp"

namespace vsd {

namespace {

struct Check {
  const char* name;
  std::function<std::pair<bool, std::string>()> run;
};

Tensor random_positive(std::size_t n, Rng& rng, double lo, double hi) {
  Tensor t({n});
  for (double& v : t.values()) v = std::exp(rng.uniform(std::log(lo), std::log(hi)));
  return t;
}

Tensor random_theta(std::size_t k, std::size_t q, Rng& rng) {
  Tensor t({k, q});
  for (double& v : t.values()) v = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.3, 1.5);
  return t;
}

// Monte-Carlo KL between each column's Gaussian N(Theta_j, D U A U^T D) and
// N(0, diag(1/beta_j)), using w - Theta_j = D U A^(1/2) eps.
double mc_kl_full(const Tensor& alpha, const Tensor& u, const Tensor& theta, const Tensor& beta, std::size_t n,
                  Rng& rng) {
  const std::size_t k = alpha.size();
  const std::size_t q = theta.cols();
  double total = 0.0;
  for (std::size_t j = 0; j < q; ++j) {
    double log_det = 0.0;
    for (std::size_t i = 0; i < k; ++i) log_det += std::log(std::abs(theta(i, j))) + 0.5 * std::log(alpha[i]);
    double acc = 0.0;
    std::vector<double> eps(k);
    for (std::size_t s = 0; s < n; ++s) {
      double e2 = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        eps[i] = rng.normal();
        e2 += eps[i] * eps[i];
      }
      double log_p = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        double d = 0.0;
        for (std::size_t m = 0; m < k; ++m) d += u(i, m) * std::sqrt(alpha[m]) * eps[m];
        const double w = theta(i, j) + theta(i, j) * d;
        log_p += 0.5 * std::log(beta(i, j)) - 0.5 * beta(i, j) * w * w;
      }
      acc += -0.5 * e2 - log_det - log_p;
    }
    total += acc / static_cast<double>(n);
  }
  return total;
}

std::pair<bool, std::string> result(bool ok, const std::string& detail) { return {ok, detail}; }

std::string num(double v) { return format_double(v); }

}  // namespace

bool cmd_verify(std::ostream& out) {
  const std::vector<Check> checks = {
      {"kl_full matches Monte-Carlo log-density ratio",
       [] {
         Rng rng(11);
         Rng init(12);
         const Tensor alpha = random_positive(3, rng, 0.1, 1.0);
         const Tensor u = HouseholderChain(3, 2, 0, init).matrix();
         const Tensor theta = random_theta(3, 2, rng);
         const Tensor beta = empirical_bayes_beta(theta, alpha, u);
         const double exact = kl_full(alpha, u, theta, beta);
         const double mc = mc_kl_full(alpha, u, theta, beta, 200000, rng);
         const double rel = std::abs(mc - exact) / std::abs(exact);
         return result(rel < 0.03, "relative error " + num(rel));
       }},
      {"kl_full at the empirical-Bayes beta equals the closed form",
       [] {
         Rng rng(21);
         Rng init(22);
         const Tensor alpha = random_positive(4, rng, 0.05, 2.0);
         const Tensor u = HouseholderChain(4, 3, 0, init).matrix();
         const Tensor theta = random_theta(4, 3, rng);
         const double a = kl_full(alpha, u, theta, empirical_bayes_beta(theta, alpha, u));
         const double b = kl_eb_vsd(alpha, u, 3);
         return result(std::abs(a - b) < 1e-10, "difference " + num(a - b));
       }},
      {"empirical-Bayes beta is stationary",
       [] {
         Rng rng(31);
         Rng init(32);
         const Tensor alpha = random_positive(3, rng, 0.05, 2.0);
         const Tensor u = HouseholderChain(3, 1, 0, init).matrix();
         const Tensor theta = random_theta(3, 2, rng);
         const Tensor beta = empirical_bayes_beta(theta, alpha, u);
         double worst = 0.0;
         for (std::size_t i = 0; i < beta.size(); ++i) {
           const double h = 1e-6 * beta[i];
           Tensor up = beta, dn = beta;
           up[i] += h;
           dn[i] -= h;
           worst = std::max(worst, std::abs((kl_full(alpha, u, theta, up) - kl_full(alpha, u, theta, dn)) / (2 * h)));
         }
         return result(worst < 1e-6, "largest derivative " + num(worst));
       }},
      {"Householder chains are orthogonal",
       [] {
         double worst = 0.0;
         for (std::size_t rank : {0, 2, 5}) {
           for (std::size_t t = 1; t <= 3; ++t) {
             Rng init(40 + t + rank);
             const Tensor u = HouseholderChain(12, t, rank, init).matrix();
             worst = std::max(worst, frobenius_norm(sub(matmul(transpose(u), u), Tensor::eye(12))));
           }
         }
         return result(worst < 1e-10, "max |U^T U - I|_F " + num(worst));
       }},
      {"hierarchical log-Normal KL matches Monte Carlo",
       [] {
         Rng rng(51);
         const Tensor gamma = Tensor::vector({0.3, -0.2});
         const Tensor delta = Tensor::vector({0.5, 0.2});
         const double a = 2.0, b = 1.5;
         const double exact = kl_lognormal_gamma(gamma, delta, a, b);
         double acc = 0.0;
         const std::size_t n = 200000;
         for (std::size_t s = 0; s < n; ++s) {
           for (std::size_t i = 0; i < 2; ++i) {
             const double lz = gamma[i] + std::sqrt(delta[i]) * rng.normal();
             const double z = std::exp(lz);
             const double log_q = -lz - 0.5 * std::log(2 * std::numbers::pi * delta[i]) -
                                  (lz - gamma[i]) * (lz - gamma[i]) / (2 * delta[i]);
             const double log_p = a * std::log(b) - std::lgamma(a) - (a + 1) * std::log(z) - b / z;
             acc += log_q - log_p;
           }
         }
         const double mc = acc / static_cast<double>(n);
         const double rel = std::abs(mc - exact) / std::abs(exact);
         return result(rel < 0.03, "relative error " + num(rel));
       }},
      {"objective gradients match central differences",
       [] {
         LayerOptions opts;
         opts.transforms = 2;
         opts.init_alpha = 0.3;
         Model model(Network({3}, {"dense:4", "relu", "dense:2"}, Variant::VsdHier, opts, 61), Likelihood::Categorical);
         Rng data_rng(62);
         Batch batch;
         batch.x = sample_standard_normal({5, 3}, data_rng);
         batch.labels = {0, 1, 1, 0, 1};
         Objective obj;
         obj.dataset_size = 5;
         auto loss = [&](Tape& tape) {
           Rng local(63), global(64);
           ForwardContext ctx{local, global, NoiseMode::Stochastic};
           return negative_elbo(tape, model, batch, obj, ctx).total;
         };
         std::vector<Parameter*> params = model.parameters();
         const GradCheckResult r = finite_difference_check(loss, params);
         return result(r.max_error < 1e-5, "max relative error " + num(r.max_error) + " at " + r.worst_parameter);
       }},
      {"OOD metrics on separated scores",
       [] {
         const std::vector<double> in{0.9, 0.8, 0.95}, outs{0.1, 0.3};
         const OodMetrics m = ood_metrics(in, outs);
         const bool ok = m.auroc == 1.0 && m.detection_error == 0.0 && m.fpr_at_95_tpr == 0.0 && m.aupr_in == 1.0 &&
                         m.aupr_out == 1.0;
         return result(ok, "auroc " + num(m.auroc) + ", detection error " + num(m.detection_error));
       }},
      {"spectral norm and stable rank",
       [] {
         const Tensor w = Tensor::matrix({{3.0, 0.0}, {0.0, 1.0}});
         const double sn = spectral_norm(w);
         const double sr = stable_rank(w);
         return result(std::abs(sn - 3.0) < 1e-9 && std::abs(sr - 10.0 / 9.0) < 1e-9,
                       "spectral norm " + num(sn) + ", stable rank " + num(sr));
       }},
  };

  bool all = true;
  for (const Check& c : checks) {
    bool ok = false;
    std::string detail;
    try {
      std::tie(ok, detail) = c.run();
    } catch (const std::exception& e) {
      detail = std::string("threw: ") + e.what();
    }
    all = all && ok;
    out << (ok ? "PASS " : "FAIL ") << c.name << " (" << detail << ")\n";
  }
  out << (all ? "all checks passed" : "some checks failed") << "\n";
  return all;
}

}  // namespace vsd
