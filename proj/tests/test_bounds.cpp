#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "powerlab/bounds.hpp"
#include "powerlab/core.hpp"

using namespace powerlab;

namespace {

Spectrum two_values(double l1, double l2) {
  Spectrum s;
  s.values = {l1, l2, 0.0};
  return s;
}

}  // namespace

TEST(PowermBoundTest, ZerothPowerIsFourOverOverlapSquared) {
  EXPECT_DOUBLE_EQ(powerm_bound(0, 1.0, 0.9, 0.2025 + 1e-3, 0.5), 16.0);
}

TEST(PowermBoundTest, ZeroBetaCollapsesToVanillaRate) {
  for (int k : {1, 5, 20}) {
    EXPECT_NEAR(powerm_bound(k, 1.0, 0.8, 0.0, 0.3), std::pow(0.8, 2 * k) / 0.09, 1e-15);
  }
}

TEST(PowermBoundTest, SmallBetaUsesSecondEigenvalueRoot) {
  const double beta = 0.1;
  const double expected =
      4.0 * std::pow((0.9 + std::sqrt(0.81 - 4.0 * beta)) / (1.0 + std::sqrt(1.0 - 4.0 * beta)), 20);
  EXPECT_NEAR(powerm_bound(10, 1.0, 0.9, beta, 0.5), expected, 1e-12 * expected);
}

TEST(PowermBoundTest, StrictRegionUsesFourFactor) {
  const double beta = 0.23;
  const double expected = 4.0 / 0.25 * std::pow(2.0 * std::sqrt(beta) / (1.0 + std::sqrt(1.0 - 4.0 * beta)), 20);
  EXPECT_NEAR(powerm_bound(10, 1.0, 0.9, beta, 0.5), expected, 1e-12 * expected);
}

TEST(PowermBoundTest, OutsideGuaranteeRegionThrows) {
  EXPECT_THROW(powerm_bound(3, 1.0, 0.9, 0.26, 0.5), std::domain_error);
}

TEST(PowermBoundTest, DecreasesWithK) {
  double prev = powerm_bound(0, 1.0, 0.9, 0.2025, 0.7);
  for (int k = 1; k < 40; ++k) {
    const double cur = powerm_bound(k, 1.0, 0.9, 0.2025, 0.7);
    EXPECT_LT(cur, prev);
    prev = cur;
  }
}

TEST(PowermBoundTest, RateIsSmallestNearQuarterSquaredSecondEigenvalue) {
  auto rate = [](double beta) { return powerm_bound(31, 1.0, 0.9, beta, 1.0) / powerm_bound(30, 1.0, 0.9, beta, 1.0); };
  const double best = rate(0.2025);
  for (double beta : {0.0, 0.1, 0.15, 0.19, 0.2, 0.21, 0.22, 0.25}) EXPECT_LE(best, rate(beta) + 1e-12) << beta;
}

TEST(RhoPrecisionTest, ExactEstimateAccepted) { EXPECT_TRUE(check_rho_precision(0.9, two_values(1.0, 0.9))); }

TEST(RhoPrecisionTest, BoundaryAccepted) { EXPECT_TRUE(check_rho_precision(1.0, two_values(1.0, 0.9))); }

TEST(RhoPrecisionTest, TooFarRejected) { EXPECT_FALSE(check_rho_precision(0.79, two_values(1.0, 0.9))); }

TEST(PracticalJTest, UnitLogsGiveTwo) {
  // tan^2(theta0) / (delta alpha2) = e and d tau / rho = e with alpha1 = alpha2 = 1.
  const double rho = 0.45;
  const int d = 1;
  const double tau = std::numbers::e * rho;
  const double delta = std::min(rho, 1.0 / tau);
  const double theta0 = std::atan(std::sqrt(std::numbers::e * delta));
  EXPECT_EQ(practical_J_bound(1.0, 1.0, rho, tau, d, theta0), 2);
}

TEST(PracticalJTest, MatchesDirectEvaluation) {
  const double alpha = 0.1;
  const double rho = 0.1;
  const double tau = 2.0;
  const int d = 100;
  const double theta0 = std::numbers::pi / 4.0;
  // delta = min(0.1, 1/(2*10)) = 0.05 and tan(pi/4) = 1.
  const double delta = 0.05;
  const double raw = std::log(1.0 / (delta * alpha)) / alpha + std::log(d * tau / rho) / alpha;
  EXPECT_EQ(practical_J_bound(alpha, alpha, rho, tau, d, theta0), static_cast<int>(std::ceil(raw)));
  EXPECT_EQ(practical_J_bound(alpha, alpha, rho, tau, d, theta0), 129);
}

TEST(PracticalJTest, HalvingGapIncreasesBudget) {
  const int base = practical_J_bound(0.1, 0.1, 0.05, 2.0, 50, 1.0);
  EXPECT_GT(practical_J_bound(0.05, 0.1, 0.05, 2.0, 50, 1.0), base);
}

TEST(PracticalJTest, ConstantScalesBudget) {
  EXPECT_GE(practical_J_bound(0.1, 0.1, 0.05, 2.0, 50, 1.0, 2.0),
            2 * practical_J_bound(0.1, 0.1, 0.05, 2.0, 50, 1.0) - 1);
}

TEST(PracticalJTest, RhoAboveRootAlphaThrows) {
  EXPECT_THROW(practical_J_bound(0.01, 0.1, 0.2, 2.0, 10, 1.0), std::domain_error);
}

TEST(PracticalJTest, RejectsTauAtMostOne) {
  EXPECT_THROW(practical_J_bound(0.1, 0.1, 0.1, 1.0, 10, 1.0), std::invalid_argument);
}
