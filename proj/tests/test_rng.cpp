#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "fwer/rng.hpp"

using fwer::RngStream;

TEST(RngStream, SameSeedAndPathGiveSameSequence) {
  RngStream a(42, {1, 2, 3});
  RngStream b(42, {1, 2, 3});
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a(), b());
}

TEST(RngStream, ChildMatchesExplicitPath) {
  RngStream parent(7, {5});
  RngStream direct(7, {5, 9});
  RngStream via = parent.child(9);
  RngStream via_list = RngStream(7).child({5, 9});
  for (int i = 0; i < 100; ++i) {
    const auto x = direct();
    ASSERT_EQ(x, via());
    ASSERT_EQ(x, via_list());
  }
}

TEST(RngStream, ChildDoesNotAdvanceParent) {
  RngStream a(1), b(1);
  (void)a.child(3)();
  EXPECT_EQ(a(), b());
}

TEST(RngStream, DistinctPathsAndSeedsDiffer) {
  RngStream a(1, {1, 2}), b(1, {2, 1}), c(2, {1, 2});
  const auto x = a(), y = b(), z = c();
  EXPECT_NE(x, y);
  EXPECT_NE(x, z);
  EXPECT_NE(y, z);
}

TEST(RngStream, SiblingStreamsUncorrelated) {
  RngStream root(11);
  const int n = 100000;
  auto s1 = root.child(0), s2 = root.child(1);
  double sxy = 0.0;
  for (int i = 0; i < n; ++i) sxy += s1.normal() * s2.normal();
  EXPECT_LT(std::abs(sxy / n), 4.0 / std::sqrt(n));
}

TEST(RngStream, UniformInHalfOpenUnitInterval) {
  RngStream r(3);
  double sum = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
    const double v = r.uniform_open();
    ASSERT_GT(v, 0.0);
    ASSERT_LT(v, 1.0);
  }
  EXPECT_NEAR(sum / 100000, 0.5, 0.005);
}

TEST(RngStream, NormalMoments) {
  RngStream r(5);
  const int n = 100000;
  double s = 0.0, ss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal(0.0, 2.0);
    s += x;
    ss += x * x;
  }
  const double mean = s / n;
  EXPECT_NEAR(mean, 0.0, 0.02 * 2.0);
  EXPECT_NEAR(ss / n - mean * mean, 4.0, 0.06);
}

TEST(RngStream, StandardNormalMeanWithinTolerance) {
  RngStream r(123, {4});
  double s = 0.0;
  for (int i = 0; i < 100000; ++i) s += r.normal();
  EXPECT_NEAR(s / 100000, 0.0, 0.02);
}

TEST(RngStream, ChiSquareMean) {
  RngStream r(8);
  const int n = 50000;
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += r.chi_square(7.0);
  EXPECT_NEAR(s / n, 7.0, 4.0 * std::sqrt(14.0 / n));
}

TEST(RngStream, BinomialEdgeCases) {
  RngStream r(9);
  EXPECT_EQ(r.binomial(0, 0.3), 0);
  EXPECT_EQ(r.binomial(10, 0.0), 0);
  EXPECT_EQ(r.binomial(10, 1.0), 10);
  EXPECT_THROW(r.binomial(-1, 0.5), std::invalid_argument);
}

TEST(Multinomial, ZeroTrials) {
  RngStream r(1);
  const std::vector<double> p{0.2, 0.3, 0.5};
  EXPECT_EQ(fwer::multinomial_sample(r, 0, p), (std::vector<int>{0, 0, 0}));
}

TEST(Multinomial, DegenerateSimplex) {
  RngStream r(1);
  const std::vector<double> p{1.0, 0.0, 0.0};
  EXPECT_EQ(fwer::multinomial_sample(r, 7, p), (std::vector<int>{7, 0, 0}));
}

TEST(Multinomial, RejectsBadProbabilities) {
  RngStream r(1);
  EXPECT_THROW(fwer::multinomial_sample(r, 5, std::vector<double>{-0.1, 1.1}), std::invalid_argument);
  EXPECT_THROW(fwer::multinomial_sample(r, 5, std::vector<double>{0.5, 0.4}), std::invalid_argument);
}

TEST(Multinomial, CountsSumAndMomentsMatch) {
  RngStream r(2024);
  const std::vector<double> p{1.0 / 6, 1.0 / 6, 2.0 / 3};
  const int trials = 600, draws = 10000;
  std::vector<double> mean(3, 0.0);
  for (int k = 0; k < draws; ++k) {
    const auto c = fwer::multinomial_sample(r, trials, p);
    ASSERT_EQ(std::accumulate(c.begin(), c.end(), 0), trials);
    for (int i = 0; i < 3; ++i) mean[i] += c[i];
  }
  for (int i = 0; i < 3; ++i) {
    mean[i] /= draws;
    const double se = std::sqrt(trials * p[i] * (1 - p[i]) / draws);
    EXPECT_LT(std::abs(mean[i] - trials * p[i]), 3.0 * se) << "component " << i;
  }
}
