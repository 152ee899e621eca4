#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "vsd/network.hpp"

namespace vsd {

enum class Likelihood { Categorical, Gaussian };

std::string_view to_string(Likelihood l);
Likelihood parse_likelihood(std::string_view name);

/// A network plus its likelihood. Gaussian models carry a log-precision scalar
/// that is trainable unless fixed.
struct Model {
  Model(Network net, Likelihood lik, double log_precision = 0.0, bool fixed_precision = false);

  Network network;
  Likelihood likelihood;
  Parameter log_precision;

  /// Network parameters, plus the log precision for Gaussian models.
  std::vector<Parameter*> parameters();
  std::map<std::string, Tensor> state();
  void load_state(const std::map<std::string, Tensor>& values);
};

/// Training examples. `x` is [n x ...]; classification uses `labels`,
/// regression uses `targets` [n x outputs].
struct Batch {
  Tensor x;
  std::vector<int> labels;
  Tensor targets;

  std::size_t size() const { return x.rank() == 0 ? 0 : x.dim(0); }
};

/// Rows `idx` of a tensor along its first axis.
Tensor take_rows(const Tensor& t, const std::vector<std::size_t>& idx);
Batch take(const Batch& data, const std::vector<std::size_t>& idx);

struct Objective {
  double lambda = 1.0;          // weight on the KL term
  std::size_t dataset_size = 1; // N
  std::size_t train_samples = 1;
};

struct ObjectiveTerms {
  Var total;
  Var data;  // -(N/|B|) sum log p, averaged over train_samples passes
  Var kl;    // unweighted sum of layer KLs
};

/// -(N/|B|) sum_n log p(y_n | x_n, noise) + lambda * sum_layers KL.
ObjectiveTerms negative_elbo(Tape& tape, Model& model, const Batch& batch, const Objective& objective,
                             ForwardContext& ctx);

/// z = exp(gamma + sqrt(delta) * eps), one draw.
Tensor hier_sample_z(const Tensor& gamma, const Tensor& delta, Rng& rng);

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(const std::vector<Parameter*>& params, double lr) = 0;
  /// Moment buffers by parameter name, plus a scalar "step" entry.
  virtual std::map<std::string, Tensor> state() const = 0;
  virtual void load_state(const std::map<std::string, Tensor>& state) = 0;
};

class Adam : public Optimizer {
 public:
  Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(const std::vector<Parameter*>& params, double lr) override;
  std::map<std::string, Tensor> state() const override;
  void load_state(const std::map<std::string, Tensor>& state) override;

 private:
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::map<std::string, Tensor> m_, v_;
};

class SgdMomentum : public Optimizer {
 public:
  explicit SgdMomentum(double momentum = 0.9);
  void step(const std::vector<Parameter*>& params, double lr) override;
  std::map<std::string, Tensor> state() const override;
  void load_state(const std::map<std::string, Tensor>& state) override;

 private:
  double momentum_;
  std::map<std::string, Tensor> velocity_;
};

struct TrainSpec {
  std::string optimizer = "adam";  // "adam" or "sgd"
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double momentum = 0.9;
  double lr_gamma = 0.3;
  std::size_t lr_step = 10;                // decay every lr_step epochs; 0 disables
  std::vector<std::size_t> milestones;     // explicit decay epochs; overrides lr_step when non-empty
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  std::size_t eval_samples = 100;
  std::size_t train_samples = 0;           // 0 = 2 for bbb, else 1

  /// Throws std::invalid_argument on a bad field.
  void validate() const;
};

std::unique_ptr<Optimizer> make_optimizer(const TrainSpec& spec);

/// Learning rate during `epoch` (0-based) under the multi-step schedule.
double scheduled_lr(const TrainSpec& spec, std::size_t epoch);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double objective = 0.0;
  double data_term = 0.0;
  double kl_term = 0.0;
  double lr = 0.0;
};

/// Raised when the objective or a parameter becomes non-finite. The model
/// holds the parameters from the end of the last completed epoch.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t epoch, const std::string& what);
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

/// Everything needed to resume training.
struct TrainState {
  std::size_t epoch = 0;  // completed epochs
  std::string shuffle_rng;
  std::string local_rng;
  std::string global_rng;
  std::map<std::string, Tensor> optimizer;
  std::vector<EpochRecord> trace;
};

struct TrainOptions {
  double lambda = 1.0;
  /// Called after every completed epoch.
  std::function<void(const TrainState&)> on_epoch;
  /// Resume point; nullptr starts fresh.
  const TrainState* resume = nullptr;
};

/// Minibatch training. Shuffling, per-example noise and batch-shared noise use
/// separate streams derived from spec.seed; the result is deterministic.
TrainState train(Model& model, const Batch& data, const TrainSpec& spec, const TrainOptions& options);

/// Averaged class probabilities [n x C] over `samples` stochastic passes.
/// MAP models use one deterministic pass.
Tensor predict_proba(Model& model, const Tensor& x, std::size_t samples, Rng& local, Rng& global,
                     std::size_t chunk = 256);

struct RegressionPrediction {
  Tensor mean;      // [n x outputs]
  Tensor variance;  // MC spread plus 1/precision
};

RegressionPrediction predict_regression(Model& model, const Tensor& x, std::size_t samples, Rng& local,
                                        Rng& global, std::size_t chunk = 256);

}  // namespace vsd
