#include <gtest/gtest.h>

#include <array>
#include <set>

#include "synspec/random.hpp"

using synspec::RandomStream;

TEST(RandomStream, SameKeySameSequence) {
  RandomStream a(42), b(42);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(RandomStream, DrawDependsOnlyOnKeyAndCounter) {
  RandomStream a(7);
  std::vector<std::uint64_t> seq;
  for (int i = 0; i < 10; ++i) seq.push_back(a.next_u64());
  // Reference: the n-th draw is mix64(key + golden * n).
  for (std::uint64_t n = 1; n <= 10; ++n)
    EXPECT_EQ(seq[n - 1], synspec::mix64(7 + 0xd1b54a32d192ed03ULL * n));
}

TEST(RandomStream, SplitsAreDistinctAndStable) {
  const RandomStream root(1);
  std::set<std::uint64_t> keys;
  for (std::uint64_t i = 0; i < 1000; ++i) keys.insert(root.split(i).key());
  EXPECT_EQ(keys.size(), 1000u);
  EXPECT_EQ(root.split(5).key(), RandomStream(1).split(5).key());
  EXPECT_NE(root.split("shuffle").key(), root.split("init").key());
  // Splitting does not advance the parent.
  RandomStream p(9);
  const auto before = p.counter();
  (void)p.split(3);
  EXPECT_EQ(p.counter(), before);
}

TEST(RandomStream, UniformRange) {
  RandomStream r(3);
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    const double v = r.uniform(-50.0, 50.0);
    ASSERT_GE(v, -50.0);
    ASSERT_LE(v, 50.0);
  }
  EXPECT_EQ(r.uniform(2.0, 2.0), 2.0);
}

TEST(RandomStream, BelowIsRoughlyUniform) {
  RandomStream r(11);
  constexpr int kBins = 9, kDraws = 90000;
  std::array<int, kBins> counts{};
  for (int i = 0; i < kDraws; ++i) {
    const auto v = r.below(kBins);
    ASSERT_LT(v, static_cast<std::uint64_t>(kBins));
    ++counts[v];
  }
  // Chi-square with 8 degrees of freedom; 26.1 is the 0.999 quantile.
  double chi2 = 0.0;
  const double expected = static_cast<double>(kDraws) / kBins;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  EXPECT_LT(chi2, 26.1);
}

TEST(RandomStream, IntegerInclusiveBounds) {
  RandomStream r(5);
  std::set<std::int64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const auto v = r.integer(2, 10);
    ASSERT_GE(v, 2);
    ASSERT_LE(v, 10);
    seen.insert(v);
  }
  EXPECT_EQ(seen.size(), 9u);
}

TEST(Mix64, IsConstexprAndNonTrivial) {
  static_assert(synspec::mix64(0) != 0);
  EXPECT_NE(synspec::child_seed(0, 0), synspec::child_seed(0, 1));
  EXPECT_NE(synspec::child_seed(0, 1), synspec::child_seed(1, 0));
}
