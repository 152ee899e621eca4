#include "vsd/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

namespace vsd {

std::string_view to_string(Likelihood l) { return l == Likelihood::Categorical ? "categorical" : "gaussian"; }

Likelihood parse_likelihood(std::string_view name) {
  if (name == "categorical") return Likelihood::Categorical;
  if (name == "gaussian") return Likelihood::Gaussian;
  throw std::invalid_argument("unknown likelihood '" + std::string(name) + "' (expected categorical or gaussian)");
}

Model::Model(Network net, Likelihood lik, double log_precision_init, bool fixed_precision)
    : network(std::move(net)),
      likelihood(lik),
      log_precision("log_precision", Tensor::scalar(log_precision_init), !fixed_precision) {}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out = network.parameters();
  if (likelihood == Likelihood::Gaussian) out.push_back(&log_precision);
  return out;
}

std::map<std::string, Tensor> Model::state() {
  std::map<std::string, Tensor> out;
  for (Parameter* p : parameters()) out.emplace(p->name, p->value);
  return out;
}

void Model::load_state(const std::map<std::string, Tensor>& values) {
  std::map<std::string, Tensor> net_values = values;
  if (likelihood == Likelihood::Gaussian) {
    auto it = net_values.find(log_precision.name);
    if (it == net_values.end()) throw ShapeError("missing parameter log_precision");
    if (it->second.size() != 1) throw ShapeError("log_precision must be a scalar");
    log_precision.value = Tensor::scalar(it->second[0]);
    net_values.erase(it);
  }
  network.load_state(net_values);
}

Tensor take_rows(const Tensor& t, const std::vector<std::size_t>& idx) {
  if (t.rank() == 0) throw ShapeError("take_rows: scalar tensor");
  const std::size_t n = t.dim(0);
  const std::size_t row = t.size() / n;
  Shape shape = t.shape();
  shape[0] = idx.size();
  std::vector<double> out;
  out.reserve(idx.size() * row);
  for (std::size_t i : idx) {
    if (i >= n) throw ShapeError("take_rows: index " + std::to_string(i) + " out of range");
    out.insert(out.end(), t.data() + i * row, t.data() + (i + 1) * row);
  }
  return Tensor(std::move(shape), std::move(out));
}

Batch take(const Batch& data, const std::vector<std::size_t>& idx) {
  Batch b;
  b.x = take_rows(data.x, idx);
  if (!data.labels.empty()) {
    b.labels.reserve(idx.size());
    for (std::size_t i : idx) b.labels.push_back(data.labels.at(i));
  }
  if (data.targets.rank() > 0) b.targets = take_rows(data.targets, idx);
  return b;
}

ObjectiveTerms negative_elbo(Tape& tape, Model& model, const Batch& batch, const Objective& objective,
                             ForwardContext& ctx) {
  const std::size_t n = batch.size();
  if (n == 0) throw ShapeError("negative_elbo: empty batch");
  if (!(objective.lambda >= 0.0)) throw std::invalid_argument("lambda must be non-negative");
  const std::size_t samples = std::max<std::size_t>(1, objective.train_samples);
  const double scale = static_cast<double>(objective.dataset_size) / static_cast<double>(n) /
                       static_cast<double>(samples);
  Var x = tape.constant(batch.x);
  Var data = tape.constant(Tensor::scalar(0.0));
  for (std::size_t s = 0; s < samples; ++s) {
    Var out = model.network.forward(tape, x, ctx);
    Var log_lik;
    if (model.likelihood == Likelihood::Categorical) {
      if (batch.labels.size() != n) throw ShapeError("negative_elbo: labels do not match the batch");
      log_lik = -softmax_cross_entropy(out, batch.labels);
    } else {
      if (batch.targets.shape() != out.shape()) {
        throw ShapeError("negative_elbo: targets " + shape_to_string(batch.targets.shape()) +
                         " do not match outputs " + shape_to_string(out.shape()));
      }
      log_lik = gaussian_log_density(out, batch.targets, tape.param(model.log_precision));
    }
    data = data - scale * log_lik;
  }
  Var kl = model.network.kl(tape);
  return {data + objective.lambda * kl, data, kl};
}

Tensor hier_sample_z(const Tensor& gamma, const Tensor& delta, Rng& rng) {
  if (gamma.shape() != delta.shape()) throw ShapeError("hier_sample_z: gamma and delta differ in shape");
  Tensor z(gamma.shape());
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (!(delta[i] >= 0.0)) throw DomainError("hier_sample_z: delta must be non-negative");
    z[i] = std::exp(gamma[i] + std::sqrt(delta[i]) * rng.normal());
  }
  return z;
}

Adam::Adam(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(const std::vector<Parameter*>& params, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    Tensor& m = m_.try_emplace(p->name, p->value.shape()).first->second;
    Tensor& v = v_.try_emplace(p->name, p->value.shape()).first->second;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      p->value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

std::map<std::string, Tensor> Adam::state() const {
  std::map<std::string, Tensor> out;
  out.emplace("step", Tensor::scalar(static_cast<double>(t_)));
  for (const auto& [k, v] : m_) out.emplace("m." + k, v);
  for (const auto& [k, v] : v_) out.emplace("v." + k, v);
  return out;
}

void Adam::load_state(const std::map<std::string, Tensor>& state) {
  m_.clear();
  v_.clear();
  t_ = 0;
  for (const auto& [k, v] : state) {
    if (k == "step") {
      t_ = static_cast<std::size_t>(v.item());
    } else if (k.rfind("m.", 0) == 0) {
      m_.emplace(k.substr(2), v);
    } else if (k.rfind("v.", 0) == 0) {
      v_.emplace(k.substr(2), v);
    } else {
      throw std::invalid_argument("unexpected Adam state entry " + k);
    }
  }
}

SgdMomentum::SgdMomentum(double momentum) : momentum_(momentum) {}

void SgdMomentum::step(const std::vector<Parameter*>& params, double lr) {
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    Tensor& vel = velocity_.try_emplace(p->name, p->value.shape()).first->second;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      vel[i] = momentum_ * vel[i] + p->grad[i];
      p->value[i] -= lr * vel[i];
    }
  }
}

std::map<std::string, Tensor> SgdMomentum::state() const {
  std::map<std::string, Tensor> out;
  for (const auto& [k, v] : velocity_) out.emplace("velocity." + k, v);
  return out;
}

void SgdMomentum::load_state(const std::map<std::string, Tensor>& state) {
  velocity_.clear();
  for (const auto& [k, v] : state) {
    if (k.rfind("velocity.", 0) != 0) throw std::invalid_argument("unexpected SGD state entry " + k);
    velocity_.emplace(k.substr(9), v);
  }
}

void TrainSpec::validate() const {
  if (optimizer != "adam" && optimizer != "sgd") {
    throw std::invalid_argument("optimizer must be adam or sgd, got '" + optimizer + "'");
  }
  if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("lr must be positive");
  if (!(lr_gamma > 0.0)) throw std::invalid_argument("lr_gamma must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("Adam betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
  if (!std::is_sorted(milestones.begin(), milestones.end())) throw std::invalid_argument("milestones must be sorted");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (eval_samples == 0) throw std::invalid_argument("eval_samples must be positive");
}

std::unique_ptr<Optimizer> make_optimizer(const TrainSpec& spec) {
  if (spec.optimizer == "sgd") return std::make_unique<SgdMomentum>(spec.momentum);
  return std::make_unique<Adam>(spec.beta1, spec.beta2, spec.eps);
}

double scheduled_lr(const TrainSpec& spec, std::size_t epoch) {
  std::size_t decays = 0;
  if (!spec.milestones.empty()) {
    decays = static_cast<std::size_t>(
        std::upper_bound(spec.milestones.begin(), spec.milestones.end(), epoch) - spec.milestones.begin());
  } else if (spec.lr_step > 0) {
    decays = epoch / spec.lr_step;
  }
  return spec.lr * std::pow(spec.lr_gamma, static_cast<double>(decays));
}

DivergenceError::DivergenceError(std::size_t epoch, const std::string& what)
    : std::runtime_error("diverged in epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}

namespace {

bool grads_finite(const std::vector<Parameter*>& params) {
  return std::all_of(params.begin(), params.end(), [](const Parameter* p) { return p->grad.all_finite(); });
}

bool values_finite(const std::vector<Parameter*>& params) {
  return std::all_of(params.begin(), params.end(), [](const Parameter* p) { return p->value.all_finite(); });
}

}  // namespace

TrainState train(Model& model, const Batch& data, const TrainSpec& spec, const TrainOptions& options) {
  spec.validate();
  const std::size_t n = data.size();
  if (n == 0) throw std::invalid_argument("training set is empty");

  Rng shuffle = Rng::stream(spec.seed, 1);
  Rng local = Rng::stream(spec.seed, 2);
  Rng global = Rng::stream(spec.seed, 3);
  std::unique_ptr<Optimizer> opt = make_optimizer(spec);
  TrainState state;
  if (options.resume != nullptr) {
    state = *options.resume;
    shuffle.set_state(state.shuffle_rng);
    local.set_state(state.local_rng);
    global.set_state(state.global_rng);
    opt->load_state(state.optimizer);
  }

  Objective objective;
  objective.lambda = options.lambda;
  objective.dataset_size = n;
  objective.train_samples =
      spec.train_samples > 0 ? spec.train_samples : (model.network.variant() == Variant::Bbb ? 2 : 1);

  std::vector<Parameter*> params = model.parameters();
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = state.epoch; epoch < spec.epochs; ++epoch) {
    const double lr = scheduled_lr(spec, epoch);
    const std::map<std::string, Tensor> snapshot = model.state();
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    double total = 0.0, data_sum = 0.0, kl_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += spec.batch_size) {
      const std::size_t stop = std::min(n, start + spec.batch_size);
      const Batch batch = take(data, std::vector<std::size_t>(order.begin() + start, order.begin() + stop));
      Tape tape;
      ForwardContext ctx{local, global, NoiseMode::Stochastic};
      std::optional<ObjectiveTerms> maybe;
      try {
        maybe = negative_elbo(tape, model, batch, objective, ctx);
      } catch (const DomainError& e) {
        model.load_state(snapshot);
        throw DivergenceError(epoch + 1, e.what());
      }
      ObjectiveTerms& terms = *maybe;
      const double value = terms.total.item();
      if (!std::isfinite(value)) {
        model.load_state(snapshot);
        throw DivergenceError(epoch + 1, "objective is " + std::to_string(value));
      }
      for (Parameter* p : params) p->zero_grad();
      tape.backward(terms.total);
      if (!grads_finite(params)) {
        model.load_state(snapshot);
        throw DivergenceError(epoch + 1, "non-finite gradient");
      }
      opt->step(params, lr);
      model.network.post_step();
      if (!values_finite(params)) {
        model.load_state(snapshot);
        throw DivergenceError(epoch + 1, "non-finite parameter after update");
      }
      total += value;
      data_sum += terms.data.item();
      kl_sum += terms.kl.item();
      ++batches;
    }
    const double nb = static_cast<double>(batches);
    state.trace.push_back({epoch + 1, total / nb, data_sum / nb, kl_sum / nb, lr});
    state.epoch = epoch + 1;
    state.shuffle_rng = shuffle.state();
    state.local_rng = local.state();
    state.global_rng = global.state();
    state.optimizer = opt->state();
    if (options.on_epoch) options.on_epoch(state);
  }
  return state;
}

namespace {

// Runs `samples` passes over x in chunks and hands each chunk's outputs to `sink`.
template <typename Sink>
void run_passes(Model& model, const Tensor& x, std::size_t samples, Rng& local, Rng& global, std::size_t chunk,
                Sink&& sink) {
  if (samples == 0) throw std::invalid_argument("predict: samples must be at least 1");
  if (chunk == 0) throw std::invalid_argument("predict: chunk must be positive");
  const bool stochastic = is_bayesian(model.network.variant());
  const std::size_t passes = stochastic ? samples : 1;
  const std::size_t n = x.dim(0);
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t stop = std::min(n, start + chunk);
    std::vector<std::size_t> idx(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor xs = take_rows(x, idx);
    for (std::size_t s = 0; s < passes; ++s) {
      Tape tape(false);
      ForwardContext ctx{local, global, stochastic ? NoiseMode::Stochastic : NoiseMode::Deterministic};
      sink(start, model.network.forward(tape, tape.constant(xs), ctx).value(), passes);
    }
  }
}

}  // namespace

Tensor predict_proba(Model& model, const Tensor& x, std::size_t samples, Rng& local, Rng& global,
                     std::size_t chunk) {
  Tensor probs({x.dim(0), model.network.output_dim()});
  const std::size_t c = model.network.output_dim();
  run_passes(model, x, samples, local, global, chunk, [&](std::size_t start, const Tensor& logits, std::size_t passes) {
    const Tensor p = softmax_rows(logits);
    const double w = 1.0 / static_cast<double>(passes);
    for (std::size_t i = 0; i < p.size(); ++i) probs[start * c + i] += w * p[i];
  });
  return probs;
}

RegressionPrediction predict_regression(Model& model, const Tensor& x, std::size_t samples, Rng& local,
                                        Rng& global, std::size_t chunk) {
  const std::size_t d = model.network.output_dim();
  Tensor sum1({x.dim(0), d});
  Tensor sum2({x.dim(0), d});
  std::size_t used = 1;
  run_passes(model, x, samples, local, global, chunk, [&](std::size_t start, const Tensor& out, std::size_t passes) {
    used = passes;
    for (std::size_t i = 0; i < out.size(); ++i) {
      sum1[start * d + i] += out[i];
      sum2[start * d + i] += out[i] * out[i];
    }
  });
  const double inv = 1.0 / static_cast<double>(used);
  const double noise_var = model.likelihood == Likelihood::Gaussian ? std::exp(-model.log_precision.value.item()) : 0.0;
  RegressionPrediction pred{Tensor({x.dim(0), d}), Tensor({x.dim(0), d})};
  for (std::size_t i = 0; i < sum1.size(); ++i) {
    const double m = sum1[i] * inv;
    pred.mean[i] = m;
    pred.variance[i] = std::max(0.0, sum2[i] * inv - m * m) + noise_var;
  }
  return pred;
}

}  // namespace vsd
