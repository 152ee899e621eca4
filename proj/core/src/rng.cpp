#include "vsd/rng.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace vsd {

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

Rng Rng::stream(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over (seed, stream) gives well-separated engine seeds.
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  z ^= z >> 31;
  Rng rng(z);
  rng.seed_ = seed;
  return rng;
}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  double u;
  double v;
  double s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  cached_ = v * f;
  has_cached_ = true;
  return u * f;
}

std::size_t Rng::below(std::size_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below(0)");
  // Rejection sampling avoids modulo bias.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % n);
}

std::string Rng::state() const {
  std::ostringstream os;
  os << seed_ << ' ' << (has_cached_ ? 1 : 0) << ' ';
  os.precision(17);
  os << std::hexfloat << cached_ << std::defaultfloat << ' ' << engine_;
  return os.str();
}

void Rng::set_state(const std::string& state) {
  std::istringstream is(state);
  int cached_flag = 0;
  std::string cached_text;
  is >> seed_ >> cached_flag >> cached_text >> engine_;
  if (!is) throw std::invalid_argument("malformed Rng state");
  has_cached_ = cached_flag != 0;
  cached_ = std::strtod(cached_text.c_str(), nullptr);
}

Tensor sample_standard_normal(const Shape& shape, Rng& rng) {
  Tensor t(shape);
  for (double& v : t.values()) v = rng.normal();
  return t;
}

Tensor sample_uniform(const Shape& shape, double lo, double hi, Rng& rng) {
  Tensor t(shape);
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace vsd
