#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "vsd/tensor.hpp"

namespace vsd {

/// A trainable (or frozen) tensor together with its gradient accumulator.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string name, Tensor value, bool trainable = true);

  void zero_grad() { grad.fill(0.0); }
};

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  /// Adjoint of this node; zero-filled if backward never reached it.
  Tensor grad() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  double item() const { return value().item(); }

  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode differentiation tape.
///
/// Nodes are appended in evaluation order, so reverse insertion order is a
/// valid reverse topological order. Each node is visited once by backward().
/// A tape can be consumed once; build a new tape for the next evaluation.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient (data, frozen noise draws).
  Var constant(Tensor value);
  /// Free leaf that receives a gradient readable through Var::grad().
  Var variable(Tensor value);
  /// Leaf bound to a Parameter; one node per parameter per tape. backward()
  /// adds the adjoint into Parameter::grad when the parameter is trainable.
  Var param(Parameter& p);

  /// Records an op. `fn` is dropped when no input requires a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);

  /// Propagates d(loss)/d(node) to every node. `loss` must hold one element.
  void backward(const Var& loss);

  /// Adds `g` into the adjoint of node `id` (no-op for constants).
  void accumulate(std::size_t id, const Tensor& g);
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  Tensor grad(std::size_t id) const;

  bool grad_enabled() const noexcept { return grad_enabled_; }
  bool consumed() const noexcept { return consumed_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// When set, every recorded value is checked with ensure_finite().
  void set_check_finite(bool on) noexcept { check_finite_ = on; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  bool grad_enabled_;
  bool consumed_ = false;
  bool check_finite_ = false;
};

/// Thrown when backward() is misused (non-scalar loss, second backward pass).
class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// ---- differentiable primitives --------------------------------------------
// Binary ops broadcast like their Tensor counterparts.

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);
Var operator+(const Var& a, double s);
Var operator+(double s, const Var& a);
Var operator-(const Var& a, double s);
Var operator-(double s, const Var& a);
Var operator*(const Var& a, double s);
Var operator*(double s, const Var& a);
Var operator/(const Var& a, double s);
Var operator/(double s, const Var& a);

Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var square(const Var& a);
Var relu(const Var& a);

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var reshape(const Var& a, Shape shape);

/// Sum of all entries, rank-0 result.
Var sum(const Var& a);
Var mean(const Var& a);
/// Column sums of a matrix: [m x n] -> [n].
Var sum_rows(const Var& a);

/// Sum over rows of -log softmax(logits)[label]. logits: [n x C].
Var softmax_cross_entropy(const Var& logits, std::span<const int> labels);
/// Sum over entries of log N(target | pred, 1/precision), precision = exp(log_precision).
Var gaussian_log_density(const Var& pred, const Tensor& target, const Var& log_precision);

/// 2-D cross-correlation. x: [n, c, h, w], kernel: [o, c, kh, kw] -> [n, o, h', w'].
Var conv2d(const Var& x, const Var& kernel, std::size_t stride = 1, std::size_t padding = 0);
/// Non-overlapping 2x2 max pooling over [n, c, h, w] (h, w even).
Var max_pool2x2(const Var& x);
/// Non-overlapping 2x2 average pooling over [n, c, h, w] (h, w even).
Var avg_pool2x2(const Var& x);

/// Plain (non-differentiable) convolution used by tests and eval paths.
Tensor conv2d(const Tensor& x, const Tensor& kernel, std::size_t stride = 1, std::size_t padding = 0);

// ---- gradient checking ------------------------------------------------------

struct GradCheckResult {
  double max_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares tape gradients of `loss_fn` against central differences.
///
/// `loss_fn` must be deterministic for fixed parameter values (freeze any
/// noise by re-seeding inside it). Per entry the error is
/// |analytic - numeric| / |analytic|, or the absolute difference when
/// |analytic| < 1e-8.
GradCheckResult finite_difference_check(const std::function<Var(Tape&)>& loss_fn,
                                        std::span<Parameter* const> params, double step = 1e-5);

}  // namespace vsd
