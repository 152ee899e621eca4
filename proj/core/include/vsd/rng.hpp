#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "vsd/tensor.hpp"

namespace vsd {

/// Seeded random stream.
///
/// Bits come from std::mt19937_64, whose output sequence is fixed by the C++
/// standard. Uniforms take the top 53 bits; normals use the Marsaglia polar
/// method with the second variate cached. None of the <random> distributions
/// are used because their algorithms are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  /// Independent stream `stream` derived from `seed`; used to give each
  /// consumer (shuffling, per-example noise, batch-shared noise) its own stream.
  static Rng stream(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  bool bernoulli(double p) { return uniform() < p; }
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);

  /// Serialized engine state (including the cached normal) for checkpoints.
  std::string state() const;
  void set_state(const std::string& state);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

Tensor sample_standard_normal(const Shape& shape, Rng& rng);
Tensor sample_uniform(const Shape& shape, double lo, double hi, Rng& rng);

}  // namespace vsd
