#include "vsd/householder.hpp"

#include <cmath>

namespace vsd {

Tensor householder_apply(const Tensor& v, const Tensor& x) {
  const std::size_t k = v.size();
  const double nn = dot(v, v);
  if (!(nn > 0.0)) throw DomainError("householder_apply: zero reflection vector");
  const bool is_vector = x.rank() == 1;
  if ((is_vector && x.size() != k) || (!is_vector && (x.rank() != 2 || x.rows() != k))) {
    throw ShapeError("householder_apply: v has length " + std::to_string(k) + " but x has shape " +
                     shape_to_string(x.shape()));
  }
  const std::size_t cols = is_vector ? 1 : x.cols();
  Tensor out = x;
  for (std::size_t c = 0; c < cols; ++c) {
    double proj = 0.0;
    for (std::size_t i = 0; i < k; ++i) proj += v[i] * x[i * cols + c];
    const double f = 2.0 * proj / nn;
    for (std::size_t i = 0; i < k; ++i) out[i * cols + c] -= f * v[i];
  }
  return out;
}

Var householder_apply(const Var& v, const Var& x) {
  const std::size_t k = v.value().size();
  if (!(dot(v.value(), v.value()) > 0.0)) throw DomainError("householder_apply: zero reflection vector");
  const bool is_vector = x.value().rank() == 1;
  Var cols = is_vector ? reshape(x, {k, 1}) : x;
  Var vc = reshape(v, {k, 1});
  Var coef = 2.0 / sum(square(v));
  Var out = cols - coef * matmul(vc, matmul(transpose(vc), cols));
  return is_vector ? reshape(out, {k}) : out;
}

Var householder_apply_rows(const Var& v, const Var& x) {
  const std::size_t k = v.value().size();
  if (!(dot(v.value(), v.value()) > 0.0)) throw DomainError("householder_apply: zero reflection vector");
  Var vc = reshape(v, {k, 1});
  Var coef = 2.0 / sum(square(v));
  return x - coef * matmul(matmul(x, vc), transpose(vc));
}

HouseholderChain::HouseholderChain(std::size_t dim, std::size_t transforms, std::size_t rank, Rng& init,
                                   const std::string& prefix)
    : dim_(dim), transforms_(transforms), rank_(rank) {
  if (dim == 0) throw ShapeError("HouseholderChain: dimension must be positive");
  Tensor v = sample_standard_normal({1, dim}, init);
  const double norm = frobenius_norm(v);
  seed_ = Parameter(prefix + ".v1", scale(v, 1.0 / norm));
  constexpr double kMapStd = 0.1;
  for (std::size_t t = 1; t < transforms; ++t) {
    const std::string name = prefix + ".map" + std::to_string(t + 1);
    Map m;
    if (rank == 0) {
      m.w1 = Parameter(name + ".weight", scale(sample_standard_normal({dim, dim}, init), kMapStd));
      m.b1 = Parameter(name + ".bias", Tensor({1, dim}));
    } else {
      m.w1 = Parameter(name + ".in_weight", scale(sample_standard_normal({dim, rank}, init), kMapStd));
      m.b1 = Parameter(name + ".in_bias", Tensor({1, rank}));
      m.w2 = Parameter(name + ".out_weight", scale(sample_standard_normal({rank, dim}, init), kMapStd));
      m.b2 = Parameter(name + ".out_bias", Tensor({1, dim}));
    }
    maps_.push_back(std::move(m));
  }
}

namespace {

Var guarded(Tape& tape, const Var& v) {
  if (std::sqrt(dot(v.value(), v.value())) >= kHouseholderGuard) return v;
  Tensor e1(v.shape());
  e1[0] = 1.0;
  return tape.constant(std::move(e1));
}

}  // namespace

std::vector<Var> HouseholderChain::vectors(Tape& tape) {
  std::vector<Var> out;
  if (transforms_ == 0) return out;
  Var v = tape.param(seed_);
  out.push_back(guarded(tape, v));
  for (Map& m : maps_) {
    // The map consumes the raw previous vector; only the reflection uses the guard.
    if (rank_ == 0) {
      v = matmul(v, tape.param(m.w1)) + tape.param(m.b1);
    } else {
      Var hidden = relu(matmul(v, tape.param(m.w1)) + tape.param(m.b1));
      v = matmul(hidden, tape.param(m.w2)) + tape.param(m.b2);
    }
    out.push_back(guarded(tape, v));
  }
  return out;
}

Var HouseholderChain::matrix(Tape& tape) {
  Var u = tape.constant(Tensor::eye(dim_));
  // U = H_T ... H_1: apply H_1 first to the identity's columns.
  for (const Var& v : vectors(tape)) u = householder_apply(v, u);
  return u;
}

Var HouseholderChain::apply_rows(Tape& tape, const Var& x) {
  // Row form of U x is x^T H_1 H_2 ... H_T (each H symmetric).
  Var out = x;
  for (const Var& v : vectors(tape)) out = householder_apply_rows(v, out);
  return out;
}

Tensor HouseholderChain::matrix() const {
  Tape tape(false);
  return const_cast<HouseholderChain*>(this)->matrix(tape).value();
}

std::vector<Tensor> HouseholderChain::vectors() const {
  Tape tape(false);
  std::vector<Tensor> out;
  for (const Var& v : const_cast<HouseholderChain*>(this)->vectors(tape)) out.push_back(v.value());
  return out;
}

std::vector<Parameter*> HouseholderChain::parameters() {
  std::vector<Parameter*> out;
  if (transforms_ == 0) return out;
  out.push_back(&seed_);
  for (Map& m : maps_) {
    out.push_back(&m.w1);
    out.push_back(&m.b1);
    if (rank_ != 0) {
      out.push_back(&m.w2);
      out.push_back(&m.b2);
    }
  }
  return out;
}

Tensor sample_structured_noise(const Tensor& alpha, const Tensor& u, Rng& rng, std::size_t n) {
  const std::size_t k = alpha.size();
  if (u.rank() != 2 || u.rows() != k || u.cols() != k) {
    throw ShapeError("sample_structured_noise: U must be " + std::to_string(k) + "x" + std::to_string(k));
  }
  Tensor scaled({n, k});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t i = 0; i < k; ++i) scaled(r, i) = std::sqrt(alpha[i]) * rng.normal();
  // Row r of the result is (U scaled_r)^T = scaled_r^T U^T.
  return add_scalar(matmul(scaled, transpose(u)), 1.0);
}

}  // namespace vsd
