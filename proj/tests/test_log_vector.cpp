#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "manelab/log_vector.hpp"

using namespace manelab;

TEST(LogArithmetic, LogAddMatchesDirectSum) {
  EXPECT_NEAR(log_add(std::log(2.0), std::log(3.0)), std::log(5.0), 1e-15);
  EXPECT_EQ(log_add(neg_inf, 1.5), 1.5);
  // far outside double range
  EXPECT_NEAR(log_add(-5000.0, -5000.0), -5000.0 + std::log(2.0), 1e-12);
}

TEST(LogArithmetic, SubtractHandlesSignsAndCancellation) {
  auto a = SignedLog::from_value(5.0);
  auto b = SignedLog::from_value(3.0);
  EXPECT_NEAR(log_subtract(a, b).value(), 2.0, 1e-14);
  EXPECT_NEAR(log_subtract(b, a).value(), -2.0, 1e-14);
  EXPECT_NEAR(log_subtract(a, SignedLog::from_value(-3.0)).value(), 8.0, 1e-14);
  EXPECT_TRUE(log_subtract(a, a).is_zero());
  SignedLog tiny{1, -2000.0};
  SignedLog tinier{-1, -2001.0};
  auto d = log_subtract(tiny, tinier);
  EXPECT_EQ(d.sign, 1);
  EXPECT_NEAR(d.log_mag, -2000.0 + std::log1p(std::exp(-1.0)), 1e-12);
}

TEST(LogModeVector, DenseRoundTripIsExactForRepresentableValues) {
  std::mt19937 gen(7);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> dense(12);
    for (auto& v : dense) v = (gen() % 4 == 0) ? 0.0 : u(gen);
    auto lv = LogModeVector::from_dense(dense);
    auto back = lv.to_dense(dense.size());
    EXPECT_FALSE(back.underflow);
    for (std::size_t i = 0; i < dense.size(); ++i) EXPECT_NEAR(back.values[i], dense[i], 1e-12 * std::abs(dense[i]));
  }
}

TEST(LogModeVector, ZeroEntriesAreAbsent) {
  auto v = LogModeVector::from_dense(std::vector<double>{0.0, 2.0, 0.0});
  EXPECT_EQ(v.size(), 1u);
  EXPECT_TRUE(v.get(1).is_zero());
  v.set(2, {});
  EXPECT_TRUE(v.empty());
}

TEST(LogModeVector, UnderflowIsFlaggedNotFlushed) {
  auto v = LogModeVector::unit(3, -900.0);
  auto d = v.to_dense(4);
  EXPECT_TRUE(d.underflow);
  EXPECT_EQ(v.get(3).log_mag, -900.0);
}

TEST(LogModeVector, H0NormIsEuclidean) {
  std::vector<double> dense{3.0, 0.0, -4.0, 12.0};
  auto v = LogModeVector::from_dense(dense);
  const double n = std::exp(log_sobolev_norm(v, {0.0}, [](std::size_t m) { return std::log(double(m)); }));
  EXPECT_NEAR(n, 13.0, 1e-13);
}

TEST(LogModeVector, SobolevWeightsUseHalfPower) {
  // ||e_4||_{H^2} with lambda_n = n^2 is lambda_4^{1} = 16
  auto v = LogModeVector::unit(4);
  const double n = std::exp(log_sobolev_norm(v, {2.0}, [](std::size_t m) { return 2.0 * std::log(double(m)); }));
  EXPECT_NEAR(n, 16.0, 1e-12);
}

TEST(LogModeVector, DistanceFarBelowDoubleRange) {
  auto a = LogModeVector::unit(2, -3000.0);
  auto b = LogModeVector::unit(5, -3000.0);
  const double d = log_sobolev_distance(a, b, {0.0}, [](std::size_t) { return 0.0; });
  EXPECT_NEAR(d, -3000.0 + 0.5 * std::log(2.0), 1e-12);
  EXPECT_EQ(log_sobolev_distance(a, a, {0.0}, [](std::size_t) { return 0.0; }), neg_inf);
}
