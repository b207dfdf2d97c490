#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>

#include "potd/crypto.hpp"
#include "potd/errors.hpp"
#include "potd/stats.hpp"

using namespace potd;
using namespace potd::stats;

namespace {

using Big = boost::multiprecision::cpp_bin_float_100;

// Exhaustive pmf summation in 100-digit arithmetic with exact binomial
// coefficients.
double exact_sf(unsigned t, unsigned n, double c) {
  using boost::multiprecision::cpp_int;
  Big total = 0;
  cpp_int coef = 1;
  const Big p(c), q = Big(1) - Big(c);
  for (unsigned k = 0; k <= n; ++k) {
    if (k >= t) total += Big(coef) * pow(p, int(k)) * pow(q, int(n - k));
    coef = coef * (n - k) / (k + 1);
  }
  return total.convert_to<double>();
}

std::vector<double> gaussians(ChaChaStream& s, std::size_t n, double shift = 0.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = s.gaussian() + shift;
  return v;
}

}  // namespace

TEST(BinomSf, TrivialCases) {
  EXPECT_EQ(binom_sf(0, 20, 0.5), 1.0);
  EXPECT_DOUBLE_EQ(binom_sf(20, 20, 0.5), std::ldexp(1.0, -20));
  EXPECT_EQ(binom_sf(21, 20, 0.5), 0.0);
  EXPECT_NEAR(binom_sf(10, 20, 0.5), 0.58809852600097656, 1e-15);
}

TEST(BinomSf, MatchesExhaustiveEnumerationUpTo64) {
  double worst = 0.0;
  for (double c : {0.5, 0.3, 0.9}) {
    for (unsigned n = 1; n <= 64; ++n) {
      for (unsigned t = 0; t <= n; ++t) {
        const double want = exact_sf(t, n, c);
        const double got = binom_sf(t, n, c);
        worst = std::max(worst, std::abs(got - want) / want);
      }
    }
  }
  EXPECT_LT(worst, 1e-12);
}

TEST(BinomSf, MatchesBoostAtLargeN) {
  for (unsigned n : {100u, 1000u, 10000u}) {
    const boost::math::binomial_distribution<double> dist(n, 0.5);
    for (unsigned t = 1; t <= n; t += std::max(1u, n / 40)) {
      const double want = boost::math::cdf(boost::math::complement(dist, double(t - 1)));
      if (want < 1e-280) continue;
      EXPECT_NEAR(binom_sf(t, n, 0.5) / want, 1.0, 1e-11) << "n=" << n << " t=" << t;
    }
  }
}

TEST(OrderStatistic, UpperMedianAndQuantile) {
  const std::vector<double> even{4, 1, 3, 2};
  EXPECT_DOUBLE_EQ(median(even), 2.5);
  EXPECT_EQ(order_statistic(even, 0.5), 3.0);
  EXPECT_EQ(order_statistic(even, 0.0), 1.0);
  EXPECT_EQ(order_statistic(even, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(quantile(even, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile(even, 0.1), 1.3);
  EXPECT_THROW(median(std::vector<double>{}), ContractError);
}

TEST(OrderTest, AllAboveGivesTwoToMinusN) {
  std::vector<double> train(20), seg(15);
  for (std::size_t i = 0; i < train.size(); ++i) train[i] = double(i);
  for (std::size_t i = 0; i < seg.size(); ++i) seg[i] = 100.0 + double(i);
  const auto r = order_test(seg, train);
  EXPECT_EQ(r.t, 15u);
  EXPECT_EQ(r.n_t, 15u);
  EXPECT_DOUBLE_EQ(r.p_value, std::ldexp(1.0, -15));
}

TEST(OrderTest, TiesAtMedianCountAsNotAbove) {
  std::vector<double> train(11, 1.0), seg(10, 1.0);
  const auto r = order_test(seg, train);
  EXPECT_EQ(r.t, 0u);
  EXPECT_EQ(r.p_value, 1.0);
}

TEST(OrderTest, TooSmallSamplesAreContractErrors) {
  std::vector<double> nine(9, 0.0), ten(10, 0.0);
  EXPECT_THROW(order_test(nine, ten), ContractError);
  EXPECT_THROW(order_test(ten, nine), ContractError);
}

TEST(OrderTest, InvariantUnderMonotoneTransform) {
  ChaChaStream s(sha256("mono"));
  const auto seg = gaussians(s, 40, 0.3), train = gaussians(s, 60);
  auto f = [](std::vector<double> v) {
    for (auto& x : v) x = std::exp(3.0 * x) + 7.0;
    return v;
  };
  const auto a = order_test(seg, train), b = order_test(f(seg), f(train));
  EXPECT_EQ(a.t, b.t);
  EXPECT_EQ(a.p_value, b.p_value);
}

TEST(OrderTest, NullCalibration) {
  ChaChaStream s(sha256("null"));
  int rejects = 0;
  const int trials = 1000;
  for (int i = 0; i < trials; ++i) {
    const auto seg = gaussians(s, 64), train = gaussians(s, 128);
    rejects += order_test(seg, train).p_value < 0.05;
  }
  EXPECT_GE(rejects, 20);
  EXPECT_LE(rejects, 80);
}

TEST(OrderTest, QuantileParameterShiftsNull) {
  std::vector<double> train(101), seg(20);
  for (std::size_t i = 0; i < train.size(); ++i) train[i] = double(i);
  for (std::size_t i = 0; i < seg.size(); ++i) seg[i] = 80.5 + double(i) * 0.01;
  const auto r = order_test(seg, train, 0.8);
  EXPECT_EQ(r.z, 80.0);
  EXPECT_EQ(r.t, 20u);
  EXPECT_DOUBLE_EQ(r.p_value, binom_sf(20, 20, 1.0 - 0.8));
}

TEST(Fisher, CombinesPValues) {
  const std::vector<double> ones{1.0, 1.0, 1.0};
  EXPECT_NEAR(fisher_combine(ones).p_value, 1.0, 1e-12);
  const std::vector<double> ps{0.01, 0.2, 0.5, 0.03};
  const auto r = fisher_combine(ps);
  EXPECT_EQ(r.dof, 8u);
  const boost::math::chi_squared_distribution<double> chi(8);
  EXPECT_NEAR(r.p_value, boost::math::cdf(boost::math::complement(chi, r.statistic)), 1e-12);
  EXPECT_NEAR(chi2_sf_even(3.0, 2), std::exp(-1.5), 1e-15);
}

TEST(DeltaOutliers, ConstantScoresZero) {
  const std::vector<double> d(8, 2.5);
  const auto r = delta_outliers(d);
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(r.scores[i], 0.0);
    EXPECT_FALSE(r.flagged[i]);
  }
}

TEST(DeltaOutliers, FlagsSpikeAndIsScaleInvariant) {
  const std::vector<double> d{1.8, 4.2, 4.1, 3.3, 2.7, 30.0, 1.5, 1.0, 0.6, 0.4};
  const auto r = delta_outliers(d);
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(bool(r.flagged[i]), i == 5) << i;
  std::vector<double> scaled(d);
  for (auto& x : scaled) x *= 1000.0;
  const auto s = delta_outliers(scaled);
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_NEAR(s.scores[i], r.scores[i], 1e-9);
  EXPECT_THROW(delta_outliers(std::vector<double>{1, 2, 3}), ContractError);
}

TEST(TrendOutliers, SmoothDecayNotFlagged) {
  std::vector<double> d, lr;
  for (int i = 0; i < 10; ++i) {
    lr.push_back(0.04 * std::cos(0.15 * i) + 0.001 * (i % 3));
    d.push_back(100.0 * lr.back() * (1.0 - 0.03 * i));
  }
  for (bool f : trend_outliers(d, lr).flagged) EXPECT_FALSE(f);
}

TEST(TrendOutliers, FlagsExtraWork) {
  std::vector<double> d, lr;
  for (int i = 0; i < 10; ++i) {
    lr.push_back(0.04 * std::cos(0.15 * i));
    d.push_back(100.0 * lr.back() * (1.0 + 0.01 * ((i * 7) % 3)));
  }
  d[4] *= 1.25;
  const auto r = trend_outliers(d, lr);
  EXPECT_TRUE(r.flagged[4]);
  EXPECT_GT(r.scores[4], 4.0);
  EXPECT_EQ(r.scores[0], 0.0);
  EXPECT_EQ(r.scores[9], 0.0);
}

TEST(TrendOutliers, ZeroDeltasDisableCheck) {
  const std::vector<double> d(10, 0.0), lr(10, 1.0);
  for (bool f : trend_outliers(d, lr).flagged) EXPECT_FALSE(f);
}

TEST(Smoothness, LinearDecayScoresZero) {
  std::vector<double> l;
  for (int i = 0; i < 11; ++i) l.push_back(4.0 - 0.1 * i);
  const auto r = loss_smoothness(l);
  for (std::size_t i = 0; i < l.size(); ++i) {
    EXPECT_NEAR(r.scores[i], 0.0, 1e-9);
    EXPECT_FALSE(r.flagged[i]);
  }
}

TEST(Smoothness, StepIsFlagged) {
  std::vector<double> l;
  for (int i = 0; i < 11; ++i) l.push_back(4.0 - 0.05 * i - (i >= 6 ? 0.8 : 0.0));
  const auto r = loss_smoothness(l);
  EXPECT_TRUE(r.flagged[5] || r.flagged[6]);
  EXPECT_FALSE(r.flagged[2]);
  EXPECT_FALSE(r.flagged[9]);
  EXPECT_THROW(loss_smoothness(std::vector<double>{1.0, 2.0}), ContractError);
}

TEST(MannWhitney, SeparatedAndIdentical) {
  ChaChaStream s(sha256("mw"));
  const auto a = gaussians(s, 50), b = gaussians(s, 50, 2.0);
  const auto r = mann_whitney(b, a);
  EXPECT_LT(r.p_value, 1e-6);
  EXPECT_GT(r.z, 0.0);
  const auto same = mann_whitney(a, a);
  EXPECT_NEAR(same.z, 0.0, 1e-12);
  EXPECT_GT(same.p_value, 0.9);
}

TEST(Spearman, PerfectAndReversed) {
  const std::vector<double> x{1, 2, 3, 4, 5}, y{2, 4, 8, 16, 32}, r{5, 4, 3, 2, 1};
  EXPECT_NEAR(spearman(x, y), 1.0, 1e-12);
  EXPECT_NEAR(spearman(x, r), -1.0, 1e-12);
}

TEST(LinearFit, ExactLine) {
  const std::vector<double> x{1, 2, 3, 4}, y{3, 5, 7, 9};
  const auto f = linear_fit(x, y);
  EXPECT_NEAR(f.slope, 2.0, 1e-12);
  EXPECT_NEAR(f.intercept, 1.0, 1e-12);
  EXPECT_NEAR(f.r2, 1.0, 1e-12);
}
