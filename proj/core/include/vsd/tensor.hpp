#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace vsd {

/// Thrown when operand shapes are incompatible.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when an operation is evaluated outside its mathematical domain
/// (log of a non-positive value, division by zero, non-finite results).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major array of doubles.
///
/// The last dimension is contiguous. A rank-0 tensor (empty shape) holds one
/// value. Extents are positive; the product of extents always equals size().
class Tensor {
 public:
  Tensor() : shape_{}, data_(1, 0.0) {}
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value) { return Tensor(Shape{}, value); }
  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
  static Tensor eye(std::size_t n);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t rows() const;
  std::size_t cols() const;

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }
  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * shape_.back() + j]; }
  double operator()(std::size_t i, std::size_t j) const noexcept {
    return data_[i * shape_.back() + j];
  }

  /// Value of a single-element tensor.
  double item() const;

  Tensor reshaped(Shape shape) const;
  void fill(double value);
  bool all_finite() const noexcept;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Validation hook: throws DomainError naming `where` when any entry is NaN/Inf.
void ensure_finite(const Tensor& t, std::string_view where);

// ---- matrix algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor outer(const Tensor& a, const Tensor& b);
double dot(const Tensor& a, const Tensor& b);
double frobenius_norm(const Tensor& a);

// ---- elementwise with broadcasting ----------------------------------------
//
// Broadcasting aligns trailing dimensions (NumPy rules): extents must match or
// one of them must be 1; missing leading dimensions are treated as 1.

Shape broadcast_shape(const Shape& a, const Shape& b);
Tensor broadcast_to(const Tensor& a, const Shape& shape);
/// Sums `g` over broadcast dimensions so the result has `shape`.
Tensor reduce_to_shape(const Tensor& g, const Shape& shape);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// Throws DomainError on a zero divisor.
Tensor div(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
/// Throws DomainError for non-positive entries.
Tensor log(const Tensor& a);
/// Throws DomainError for negative entries.
Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);
Tensor relu(const Tensor& a);

double sum(const Tensor& a);
double mean(const Tensor& a);
/// Column sums of a 2-D tensor: [m x n] -> [n].
Tensor sum_rows(const Tensor& a);

/// Row-wise softmax of a 2-D tensor.
Tensor softmax_rows(const Tensor& logits);

bool allclose(const Tensor& a, const Tensor& b, double rtol = 1e-12, double atol = 1e-12);
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace vsd
