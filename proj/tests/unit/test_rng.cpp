#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "vsd/rng.hpp"

namespace {

TEST(Rng, SameSeedSameSequence) {
  vsd::Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a.normal(), b.normal());
}

TEST(Rng, StreamsDiffer) {
  vsd::Rng a = vsd::Rng::stream(7, 1), b = vsd::Rng::stream(7, 2), c = vsd::Rng::stream(8, 1);
  const double x = a.uniform();
  EXPECT_NE(x, b.uniform());
  EXPECT_NE(x, c.uniform());
}

TEST(Rng, StateRoundTripIncludesCachedNormal) {
  vsd::Rng a(5);
  a.normal();  // leaves the second polar variate cached
  vsd::Rng b(0);
  b.set_state(a.state());
  for (int i = 0; i < 10; ++i) ASSERT_EQ(a.normal(), b.normal());
  EXPECT_THROW(b.set_state("garbage"), std::invalid_argument);
}

TEST(Rng, Moments) {
  vsd::Rng rng(11);
  const int n = 200000;
  double s = 0, s2 = 0, u = 0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s += z;
    s2 += z * z;
    u += rng.uniform();
  }
  EXPECT_NEAR(s / n, 0.0, 5.0 / std::sqrt(n));
  EXPECT_NEAR(s2 / n, 1.0, 5.0 * std::sqrt(2.0 / n));
  EXPECT_NEAR(u / n, 0.5, 5.0 * std::sqrt(1.0 / 12 / n));
}

TEST(Rng, BelowCoversRange) {
  vsd::Rng rng(1);
  std::set<std::size_t> seen;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t k = rng.below(7);
    ASSERT_LT(k, 7u);
    seen.insert(k);
  }
  EXPECT_EQ(seen.size(), 7u);
}

}  // namespace
