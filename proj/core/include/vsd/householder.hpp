#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "vsd/autograd.hpp"
#include "vsd/rng.hpp"

namespace vsd {

/// Vectors shorter than this are replaced by e_1 before building a reflection.
inline constexpr double kHouseholderGuard = 1e-12;

/// (I - 2 v v^T / |v|^2) x without forming the matrix.
/// x is a [K] vector or a [K x n] matrix whose columns are reflected.
/// Throws DomainError when v is zero.
Tensor householder_apply(const Tensor& v, const Tensor& x);
Var householder_apply(const Var& v, const Var& x);

/// Reflects every row of X [n x K] through the hyperplane orthogonal to v.
Var householder_apply_rows(const Var& v, const Var& x);

/// Householder chain U = H_T ... H_1 with v_t = FC(v_{t-1}).
///
/// The seed v_1 is a free K-vector. Each later vector comes from either a full
/// affine K -> K map or a low-rank map K -> r -> K with a ReLU hidden layer.
/// T = 0 gives U = I.
class HouseholderChain {
 public:
  HouseholderChain() = default;
  /// rank == 0 selects the full K x K map.
  HouseholderChain(std::size_t dim, std::size_t transforms, std::size_t rank, Rng& init,
                   const std::string& prefix = "householder");

  std::size_t dim() const noexcept { return dim_; }
  std::size_t transforms() const noexcept { return transforms_; }
  std::size_t rank() const noexcept { return rank_; }

  /// Guarded reflection vectors v_1..v_T, each as a [1 x K] row.
  std::vector<Var> vectors(Tape& tape);
  /// The orthogonal matrix U [K x K].
  Var matrix(Tape& tape);
  /// Maps each row x of X [n x K] to (U x)^T, costing O(nKT).
  Var apply_rows(Tape& tape, const Var& x);

  Tensor matrix() const;
  std::vector<Tensor> vectors() const;

  std::vector<Parameter*> parameters();

  /// Direct access for tests that set v_1 explicitly.
  Parameter& seed() { return seed_; }

 private:
  struct Map {
    Parameter w1, b1, w2, b2;  // w2/b2 unused for the full map
  };

  std::size_t dim_ = 0;
  std::size_t transforms_ = 0;
  std::size_t rank_ = 0;
  Parameter seed_;
  std::vector<Map> maps_;
};

/// Draws n rows i.i.d. from N(1_K, U diag(alpha) U^T) as 1 + U (sqrt(alpha) * eps).
Tensor sample_structured_noise(const Tensor& alpha, const Tensor& u, Rng& rng, std::size_t n);

}  // namespace vsd
