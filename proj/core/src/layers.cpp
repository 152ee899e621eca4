#include "vsd/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "vsd/kl.hpp"

namespace vsd {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::Map: return "map";
    case Variant::Mcd: return "mcd";
    case Variant::Vd: return "vd";
    case Variant::ArdVd: return "ard-vd";
    case Variant::Bbb: return "bbb";
    case Variant::Vsd: return "vsd";
    case Variant::VsdHier: return "vsd-hier";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : {Variant::Map, Variant::Mcd, Variant::Vd, Variant::ArdVd, Variant::Bbb, Variant::Vsd,
                    Variant::VsdHier}) {
    if (to_string(v) == name) return v;
  }
  throw std::invalid_argument("unknown variant '" + std::string(name) +
                              "' (expected map, mcd, vd, ard-vd, bbb, vsd, vsd-hier)");
}

bool is_bayesian(Variant v) { return v != Variant::Map; }

Tensor xavier_uniform(const Shape& shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return sample_uniform(shape, -a, a, rng);
}

namespace {

Tensor filled(std::size_t n, double v) { return Tensor({n}, v); }

double checked_log_alpha(double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw DomainError("initial alpha must be positive");
  return std::log(alpha);
}

Var weight_decay(Tape& tape, Parameter& w, double length_scale_sq) {
  return 0.5 * length_scale_sq * sum(square(tape.param(w)));
}

// Per-example standard normals [n x k] for the multiplicative noise.
Tensor draw_eps(Rng& rng, std::size_t n, std::size_t k) { return sample_standard_normal({n, k}, rng); }

}  // namespace

Var Layer::kl(Tape& tape) { return tape.constant(Tensor::scalar(0.0)); }

DenseBase::DenseBase(std::size_t in, std::size_t out, Rng& init, const std::string& prefix) : in_(in), out_(out) {
  if (in == 0 || out == 0) throw ShapeError("dense layer needs positive in/out features");
  theta_ = Parameter(prefix + ".theta", xavier_uniform({in, out}, in, out, init));
  bias_ = Parameter(prefix + ".bias", Tensor({out}));
}

void DenseBase::check_input(const Var& x) const {
  const Shape& s = x.shape();
  if (s.size() != 2 || s[1] != in_) {
    throw ShapeError("dense layer expects [n x " + std::to_string(in_) + "], got " + shape_to_string(s));
  }
}

Var DenseBase::affine(Tape& tape, const Var& x) { return matmul(x, tape.param(theta_)) + tape.param(bias_); }

MapDense::MapDense(std::size_t in, std::size_t out, double length_scale_sq, Rng& init, const std::string& prefix)
    : DenseBase(in, out, init, prefix), length_scale_sq_(length_scale_sq) {}

Var MapDense::forward(Tape& tape, const Var& x, ForwardContext&) {
  check_input(x);
  return affine(tape, x);
}

Var MapDense::kl(Tape& tape) { return weight_decay(tape, theta_, length_scale_sq_); }

McdDense::McdDense(std::size_t in, std::size_t out, double drop_prob, double length_scale_sq, Rng& init,
                   const std::string& prefix)
    : DenseBase(in, out, init, prefix), p_(drop_prob), length_scale_sq_(length_scale_sq) {
  if (!(drop_prob >= 0.0 && drop_prob < 1.0)) throw DomainError("dropout probability must be in [0, 1)");
}

Var McdDense::forward(Tape& tape, const Var& x, ForwardContext& ctx) {
  check_input(x);
  if (ctx.mode == NoiseMode::Deterministic || p_ == 0.0) return affine(tape, x);
  const std::size_t n = x.shape()[0];
  Tensor mask({n, in_});
  const double keep = 1.0 - p_;
  for (double& m : mask.values()) m = ctx.local.bernoulli(keep) ? 1.0 / keep : 0.0;
  return affine(tape, x * tape.constant(std::move(mask)));
}

Var McdDense::kl(Tape& tape) { return weight_decay(tape, theta_, length_scale_sq_ * (1.0 - p_)); }

GaussianDropoutDense::GaussianDropoutDense(std::size_t in, std::size_t out, bool ard, double init_alpha, Rng& init,
                                           const std::string& prefix)
    : DenseBase(in, out, init, prefix), ard_(ard) {
  double la = checked_log_alpha(init_alpha);
  if (!ard) la = std::min(la, kVdLogAlphaMax);
  log_alpha_ = Parameter(prefix + ".log_alpha", filled(in, la));
}

Var GaussianDropoutDense::forward(Tape& tape, const Var& x, ForwardContext& ctx) {
  check_input(x);
  if (ctx.mode == NoiseMode::Deterministic) return affine(tape, x);
  const std::size_t n = x.shape()[0];
  Var eps = tape.constant(draw_eps(ctx.local, n, in_));
  Var xi = 1.0 + eps * exp(0.5 * tape.param(log_alpha_));
  return affine(tape, x * xi);
}

Var GaussianDropoutDense::kl(Tape& tape) {
  Var alpha = exp(tape.param(log_alpha_));
  return ard_ ? kl_ard(alpha) : kl_vd_log_uniform(alpha);
}

void GaussianDropoutDense::post_step() {
  if (ard_) return;
  for (double& v : log_alpha_.value.values()) v = std::min(v, kVdLogAlphaMax);
}

BbbDense::BbbDense(std::size_t in, std::size_t out, double prior_sigma, double init_sigma, Rng& init,
                   const std::string& prefix)
    : DenseBase(in, out, init, prefix), prior_sigma_(prior_sigma) {
  if (!(init_sigma > 0.0)) throw DomainError("initial sigma must be positive");
  if (!(prior_sigma > 0.0)) throw DomainError("prior sigma must be positive");
  log_sigma_ = Parameter(prefix + ".log_sigma", Tensor({in, out}, std::log(init_sigma)));
}

Var BbbDense::forward(Tape& tape, const Var& x, ForwardContext& ctx) {
  check_input(x);
  if (ctx.mode == NoiseMode::Deterministic) return affine(tape, x);
  Var eps = tape.constant(draw_eps(ctx.global, in_, out_));
  Var w = tape.param(theta_) + exp(tape.param(log_sigma_)) * eps;
  return matmul(x, w) + tape.param(bias_);
}

Var BbbDense::kl(Tape& tape) {
  return kl_gaussian_mean_field(tape.param(theta_), exp(tape.param(log_sigma_)), prior_sigma_);
}

VsdDense::VsdDense(std::size_t in, std::size_t out, const LayerOptions& opts, bool hierarchical, Rng& init,
                   const std::string& prefix)
    : DenseBase(in, out, init, prefix),
      hierarchical_(hierarchical),
      log_alpha_(prefix + ".log_alpha", filled(in, checked_log_alpha(opts.init_alpha))),
      chain_(in, opts.transforms, opts.householder_rank, init, prefix + ".householder"),
      a_(opts.hyper_a),
      b_(opts.hyper_b) {
  if (hierarchical) {
    if (!(opts.init_delta > 0.0)) throw DomainError("initial delta must be positive");
    if (!(opts.hyper_a > 0.0) || !(opts.hyper_b > 0.0)) throw DomainError("hyperprior a and b must be positive");
    gamma_ = Parameter(prefix + ".gamma", filled(in, opts.init_gamma));
    log_delta_ = Parameter(prefix + ".log_delta", filled(in, std::log(opts.init_delta)));
  }
}

std::vector<Parameter*> VsdDense::parameters() {
  std::vector<Parameter*> out{&theta_, &bias_, &log_alpha_};
  for (Parameter* p : chain_.parameters()) out.push_back(p);
  if (hierarchical_) {
    out.push_back(&gamma_);
    out.push_back(&log_delta_);
  }
  return out;
}

Var VsdDense::forward(Tape& tape, const Var& x, ForwardContext& ctx) {
  check_input(x);
  const std::size_t n = x.shape()[0];
  if (ctx.mode == NoiseMode::Deterministic) {
    if (!hierarchical_) return affine(tape, x);
    // Median of z.
    return affine(tape, x * exp(tape.param(gamma_)));
  }
  Var scaled = tape.constant(draw_eps(ctx.local, n, in_)) * exp(0.5 * tape.param(log_alpha_));
  Var xi = 1.0 + chain_.apply_rows(tape, scaled);
  if (hierarchical_) {
    Var eps_z = tape.constant(sample_standard_normal({in_}, ctx.global));
    Var z = exp(tape.param(gamma_) + exp(0.5 * tape.param(log_delta_)) * eps_z);
    xi = xi * z;
  }
  last_noise_ = xi.value();
  return affine(tape, x * xi);
}

Var VsdDense::kl(Tape& tape) {
  Var alpha = exp(tape.param(log_alpha_));
  Var u = chain_.matrix(tape);
  if (!hierarchical_) return kl_eb_vsd(alpha, u, out_);
  Var gamma = tape.param(gamma_);
  Var delta = exp(tape.param(log_delta_));
  return kl_hier_eb_expected(alpha, u, gamma, delta, out_) + kl_lognormal_gamma(gamma, delta, a_, b_);
}

VsdConv::VsdConv(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride,
                 std::size_t padding, const LayerOptions& opts, Rng& init, const std::string& prefix)
    : stride_(stride), padding_(padding) {
  if (in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0) {
    throw ShapeError("conv layer needs positive channels, kernel and stride");
  }
  const std::size_t area = kernel * kernel;
  kernel_ = Parameter(prefix + ".kernel", xavier_uniform({out_channels, in_channels, kernel, kernel},
                                                         in_channels * area, out_channels * area, init));
  bias_ = Parameter(prefix + ".bias", Tensor({out_channels, 1, 1}));
  log_alpha_ = Parameter(prefix + ".log_alpha", filled(in_channels, checked_log_alpha(opts.init_alpha)));
  chain_ = HouseholderChain(in_channels, opts.transforms, opts.householder_rank, init, prefix + ".householder");
}

std::vector<Parameter*> VsdConv::parameters() {
  std::vector<Parameter*> out{&kernel_, &bias_, &log_alpha_};
  for (Parameter* p : chain_.parameters()) out.push_back(p);
  return out;
}

Var VsdConv::forward(Tape& tape, const Var& x, ForwardContext& ctx) {
  const Shape& s = x.shape();
  const std::size_t c = kernel_.value.dim(1);
  if (s.size() != 4 || s[1] != c) {
    throw ShapeError("conv layer expects [n x " + std::to_string(c) + " x h x w], got " + shape_to_string(s));
  }
  Var in = x;
  if (ctx.mode == NoiseMode::Stochastic) {
    const std::size_t n = s[0];
    Var scaled = tape.constant(draw_eps(ctx.local, n, c)) * exp(0.5 * tape.param(log_alpha_));
    Var xi = 1.0 + chain_.apply_rows(tape, scaled);
    last_noise_ = xi.value();
    in = x * reshape(xi, {n, c, 1, 1});
  }
  return conv2d(in, tape.param(kernel_), stride_, padding_) + tape.param(bias_);
}

Var VsdConv::kl(Tape& tape) {
  const Shape& k = kernel_.value.shape();
  const std::size_t columns = k[0] * k[2] * k[3];
  return kl_eb_vsd(exp(tape.param(log_alpha_)), chain_.matrix(tape), columns);
}

MapConv::MapConv(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride,
                 std::size_t padding, double length_scale_sq, Rng& init, const std::string& prefix)
    : stride_(stride), padding_(padding), length_scale_sq_(length_scale_sq) {
  if (in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0) {
    throw ShapeError("conv layer needs positive channels, kernel and stride");
  }
  const std::size_t area = kernel * kernel;
  kernel_ = Parameter(prefix + ".kernel", xavier_uniform({out_channels, in_channels, kernel, kernel},
                                                         in_channels * area, out_channels * area, init));
  bias_ = Parameter(prefix + ".bias", Tensor({out_channels, 1, 1}));
}

Var MapConv::forward(Tape& tape, const Var& x, ForwardContext&) {
  return conv2d(x, tape.param(kernel_), stride_, padding_) + tape.param(bias_);
}

Var MapConv::kl(Tape& tape) { return weight_decay(tape, kernel_, length_scale_sq_); }

Var FlattenLayer::forward(Tape&, const Var& x, ForwardContext&) {
  const Shape& s = x.shape();
  if (s.empty()) throw ShapeError("flatten: scalar input");
  const std::size_t n = s[0];
  return reshape(x, {n, n == 0 ? 0 : x.value().size() / n});
}

std::unique_ptr<DenseBase> make_dense(Variant variant, std::size_t in, std::size_t out, const LayerOptions& opts,
                                      Rng& init, const std::string& prefix) {
  if (in == 1) variant = Variant::Map;
  switch (variant) {
    case Variant::Map: return std::make_unique<MapDense>(in, out, opts.length_scale_sq, init, prefix);
    case Variant::Mcd:
      return std::make_unique<McdDense>(in, out, opts.mcd_drop_prob, opts.length_scale_sq, init, prefix);
    case Variant::Vd: return std::make_unique<GaussianDropoutDense>(in, out, false, opts.init_alpha, init, prefix);
    case Variant::ArdVd: return std::make_unique<GaussianDropoutDense>(in, out, true, opts.init_alpha, init, prefix);
    case Variant::Bbb:
      return std::make_unique<BbbDense>(in, out, opts.bbb_prior_sigma, opts.bbb_init_sigma, init, prefix);
    case Variant::Vsd: return std::make_unique<VsdDense>(in, out, opts, false, init, prefix);
    case Variant::VsdHier: return std::make_unique<VsdDense>(in, out, opts, true, init, prefix);
  }
  throw std::invalid_argument("unknown variant");
}

}  // namespace vsd
