#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "vsd/autograd.hpp"
#include "vsd/householder.hpp"
#include "vsd/rng.hpp"

namespace vsd {

/// Posterior family of a network (and of each noisy layer).
enum class Variant { Map, Mcd, Vd, ArdVd, Bbb, Vsd, VsdHier };

std::string_view to_string(Variant v);
/// Parses "map", "mcd", "vd", "ard-vd", "bbb", "vsd", "vsd-hier".
Variant parse_variant(std::string_view name);
bool is_bayesian(Variant v);

enum class NoiseMode { Deterministic, Stochastic };

/// Random streams used by one forward pass.
///
/// `local` feeds per-example draws (one noise row per datapoint); `global`
/// feeds draws shared by the whole batch (hierarchical z, mean-field weights).
/// Keeping them apart means a layer that adds batch-shared draws does not
/// shift the per-example noise of the layers after it.
struct ForwardContext {
  Rng& local;
  Rng& global;
  NoiseMode mode = NoiseMode::Stochastic;
};

/// Hyperparameters shared by the noisy layers of a network.
struct LayerOptions {
  std::size_t transforms = 1;         // Householder reflections T
  std::size_t householder_rank = 0;   // 0 = full K x K map, else K -> r -> K
  double init_alpha = 0.25;           // initial droprate for VSD/VD/ARD-VD
  double mcd_drop_prob = 0.5;         // Bernoulli drop probability p
  double length_scale_sq = 1.0;       // l^2 of the N(0, l^-2 I) weight-decay prior
  double bbb_prior_sigma = 1.0;
  double bbb_init_sigma = 1e-3;
  double hyper_a = 1.0;               // inverse-Gamma shape
  double hyper_b = 1.0;               // inverse-Gamma scale
  double init_gamma = 0.0;
  double init_delta = 1e-2;
};

/// Upper bound applied to log(alpha) for VD after every optimiser step.
inline const double kVdLogAlphaMax = std::log1p(-1e-6);

class Layer {
 public:
  virtual ~Layer() = default;

  virtual Var forward(Tape& tape, const Var& x, ForwardContext& ctx) = 0;
  /// KL (or weight-decay surrogate) contribution; zero for parameter-free layers.
  virtual Var kl(Tape& tape);
  virtual std::vector<Parameter*> parameters() { return {}; }
  virtual std::string kind() const = 0;
  /// Projection applied after each optimiser step (VD clamps alpha here).
  virtual void post_step() {}
  /// Deterministic weight matrix (Theta or mu) for diagnostics, if any.
  virtual const Tensor* weight() const { return nullptr; }
};

/// Affine layer y = x Theta + b with Theta [K x Q] and bias [Q].
class DenseBase : public Layer {
 public:
  DenseBase(std::size_t in, std::size_t out, Rng& init, const std::string& prefix);

  std::size_t in_features() const noexcept { return in_; }
  std::size_t out_features() const noexcept { return out_; }
  Parameter& theta() { return theta_; }
  Parameter& bias() { return bias_; }
  const Tensor* weight() const override { return &theta_.value; }

 protected:
  Var affine(Tape& tape, const Var& x);
  void check_input(const Var& x) const;

  std::size_t in_;
  std::size_t out_;
  Parameter theta_;
  Parameter bias_;
};

/// Deterministic dense layer; KL is the weight-decay surrogate 0.5 l^2 |Theta|^2.
class MapDense : public DenseBase {
 public:
  MapDense(std::size_t in, std::size_t out, double length_scale_sq, Rng& init, const std::string& prefix);
  Var forward(Tape& tape, const Var& x, ForwardContext& ctx) override;
  Var kl(Tape& tape) override;
  std::vector<Parameter*> parameters() override { return {&theta_, &bias_}; }
  std::string kind() const override { return "map"; }

 private:
  double length_scale_sq_;
};

/// MC Dropout: Bernoulli(1 - p) input mask scaled by 1/(1 - p).
class McdDense : public DenseBase {
 public:
  McdDense(std::size_t in, std::size_t out, double drop_prob, double length_scale_sq, Rng& init,
           const std::string& prefix);
  Var forward(Tape& tape, const Var& x, ForwardContext& ctx) override;
  Var kl(Tape& tape) override;
  std::vector<Parameter*> parameters() override { return {&theta_, &bias_}; }
  std::string kind() const override { return "mcd"; }
  double drop_prob() const noexcept { return p_; }

 private:
  double p_;
  double length_scale_sq_;
};

/// Diagonal Gaussian dropout xi ~ N(1, diag(alpha)) on the inputs.
/// `ard` selects the empirical-Bayes ARD prior; otherwise the log-uniform VD
/// prior with alpha clamped below 1.
class GaussianDropoutDense : public DenseBase {
 public:
  GaussianDropoutDense(std::size_t in, std::size_t out, bool ard, double init_alpha, Rng& init,
                       const std::string& prefix);
  Var forward(Tape& tape, const Var& x, ForwardContext& ctx) override;
  Var kl(Tape& tape) override;
  std::vector<Parameter*> parameters() override { return {&theta_, &bias_, &log_alpha_}; }
  std::string kind() const override { return ard_ ? "ard-vd" : "vd"; }
  void post_step() override;
  Parameter& log_alpha() { return log_alpha_; }

 private:
  bool ard_;
  Parameter log_alpha_;
};

/// Mean-field Gaussian weights (Bayes by Backprop); one weight sample per pass.
class BbbDense : public DenseBase {
 public:
  BbbDense(std::size_t in, std::size_t out, double prior_sigma, double init_sigma, Rng& init,
           const std::string& prefix);
  Var forward(Tape& tape, const Var& x, ForwardContext& ctx) override;
  Var kl(Tape& tape) override;
  std::vector<Parameter*> parameters() override { return {&theta_, &bias_, &log_sigma_}; }
  std::string kind() const override { return "bbb"; }
  Parameter& log_sigma() { return log_sigma_; }

 private:
  double prior_sigma_;
  Parameter log_sigma_;
};

/// Variational structured dropout dense layer.
///
/// Each example n gets its own xi_n = 1 + U (sqrt(alpha) * eps_n) and the
/// output is (x_n * xi_n) Theta + b. With the hierarchical prior, a latent
/// z = exp(gamma + sqrt(delta) * eps) is drawn once per pass and multiplies
/// every xi_n. Biases carry no noise.
class VsdDense : public DenseBase {
 public:
  VsdDense(std::size_t in, std::size_t out, const LayerOptions& opts, bool hierarchical, Rng& init,
           const std::string& prefix);
  Var forward(Tape& tape, const Var& x, ForwardContext& ctx) override;
  Var kl(Tape& tape) override;
  std::vector<Parameter*> parameters() override;
  std::string kind() const override { return hierarchical_ ? "vsd-hier" : "vsd"; }

  bool hierarchical() const noexcept { return hierarchical_; }
  Parameter& log_alpha() { return log_alpha_; }
  Parameter& gamma() { return gamma_; }
  Parameter& log_delta() { return log_delta_; }
  HouseholderChain& chain() { return chain_; }
  double hyper_a() const noexcept { return a_; }
  double hyper_b() const noexcept { return b_; }

  /// The noise rows xi [n x K] used by the most recent stochastic forward pass.
  const Tensor& last_noise() const noexcept { return last_noise_; }

 private:
  bool hierarchical_;
  Parameter log_alpha_;
  HouseholderChain chain_;
  Parameter gamma_;
  Parameter log_delta_;
  double a_;
  double b_;
  Tensor last_noise_;
};

/// Convolution with per-input-channel structured noise shared over space:
/// x[n, c, :, :] is scaled by xi_n[c] before the convolution.
class VsdConv : public Layer {
 public:
  VsdConv(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride,
          std::size_t padding, const LayerOptions& opts, Rng& init, const std::string& prefix);
  Var forward(Tape& tape, const Var& x, ForwardContext& ctx) override;
  /// Empirical-Bayes KL with Q = out_channels * kh * kw columns per input channel.
  Var kl(Tape& tape) override;
  std::vector<Parameter*> parameters() override;
  std::string kind() const override { return "vsd-conv"; }
  const Tensor* weight() const override { return &kernel_.value; }

  Parameter& kernel() { return kernel_; }
  Parameter& bias() { return bias_; }
  Parameter& log_alpha() { return log_alpha_; }
  HouseholderChain& chain() { return chain_; }
  const Tensor& last_noise() const noexcept { return last_noise_; }

 private:
  std::size_t stride_;
  std::size_t padding_;
  Parameter kernel_;
  Parameter bias_;
  Parameter log_alpha_;
  HouseholderChain chain_;
  Tensor last_noise_;
};

/// Deterministic convolution with weight-decay surrogate KL.
class MapConv : public Layer {
 public:
  MapConv(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride,
          std::size_t padding, double length_scale_sq, Rng& init, const std::string& prefix);
  Var forward(Tape& tape, const Var& x, ForwardContext& ctx) override;
  Var kl(Tape& tape) override;
  std::vector<Parameter*> parameters() override { return {&kernel_, &bias_}; }
  std::string kind() const override { return "conv"; }
  const Tensor* weight() const override { return &kernel_.value; }

 private:
  std::size_t stride_;
  std::size_t padding_;
  double length_scale_sq_;
  Parameter kernel_;
  Parameter bias_;
};

class ReluLayer : public Layer {
 public:
  Var forward(Tape&, const Var& x, ForwardContext&) override { return relu(x); }
  std::string kind() const override { return "relu"; }
};

class FlattenLayer : public Layer {
 public:
  Var forward(Tape& tape, const Var& x, ForwardContext& ctx) override;
  std::string kind() const override { return "flatten"; }
};

class PoolLayer : public Layer {
 public:
  explicit PoolLayer(bool max) : max_(max) {}
  Var forward(Tape&, const Var& x, ForwardContext&) override { return max_ ? max_pool2x2(x) : avg_pool2x2(x); }
  std::string kind() const override { return max_ ? "maxpool" : "avgpool"; }

 private:
  bool max_;
};

/// Builds the dense layer for `variant`. Inputs of width 1 get a
/// deterministic layer for every variant: there is nothing to drop out.
std::unique_ptr<DenseBase> make_dense(Variant variant, std::size_t in, std::size_t out, const LayerOptions& opts,
                                      Rng& init, const std::string& prefix);

/// Glorot-uniform initialisation with the given fans.
Tensor xavier_uniform(const Shape& shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

}  // namespace vsd
