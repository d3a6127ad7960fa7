#include <gtest/gtest.h>

#include <set>

#include "megloc/rng.hpp"

namespace megloc {
namespace {

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
}

TEST(Rng, FirstOutputsArePinned) {
  // Reference values for xoshiro256** seeded through splitmix64(0); these
  // guard the on-disk reproducibility of every generated file.
  Rng rng(0);
  std::uint64_t state = 0;
  std::array<std::uint64_t, 4> s{};
  for (auto& w : s) w = splitmix64(state);
  const auto rotl = [](std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); };
  EXPECT_EQ(rng.next(), rotl(s[1] * 5, 7) * 9);
  EXPECT_EQ(splitmix64(state = 0), 0xE220A8397B1DCDAFULL);
}

TEST(Rng, UniformAndBelowStayInRange) {
  Rng rng(3);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    const auto k = rng.below(7);
    ASSERT_LT(k, 7u);
    seen.insert(k);
  }
  EXPECT_EQ(seen.size(), 7u);
}

TEST(Rng, NormalMomentsAreStandard) {
  Rng rng(9);
  double sum = 0.0, sum_sq = 0.0;
  constexpr int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sum_sq += z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sum_sq / n, 1.0, 0.01);
}

TEST(Rng, DerivedSeedsDifferByPath) {
  EXPECT_NE(derive_seed(1, {0, 1}), derive_seed(1, {1, 0}));
  EXPECT_NE(derive_seed(1, {0}), derive_seed(2, {0}));
  EXPECT_EQ(derive_seed(5, {3, 4}), derive_seed(5, {3, 4}));
}

}  // namespace
}  // namespace megloc
