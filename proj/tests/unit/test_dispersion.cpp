#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "cavspdc/dispersion.hpp"

using namespace cavspdc;

namespace {

constexpr double c0 = 299792458.0;

DispersionModel constant(double n, double lo = 1.0e15, double hi = 2.6e15, Band band = Band::telecom) {
  return DispersionModel::taylor(band, {1.2e15, n, 0.0, 0.0}, lo, hi);
}

double omega_of_nm(double nm) { return 2.0 * std::numbers::pi * c0 / (nm * 1e-9); }

}  // namespace

TEST(Dispersion, ConstantTaylorModelReturnsN0) {
  const auto m = constant(2.0);
  for (double w : {1.0e15, 1.3e15, 2.6e15}) EXPECT_DOUBLE_EQ(m.n_eff(w), 2.0);
}

TEST(Dispersion, TwoPointTableStaysWithinEndValues) {
  const double wa = 1.1e15, wb = 1.3e15;
  const auto m = DispersionModel::tabulated(Band::telecom, {wa, wb}, {1.8, 2.0});
  const double n = m.n_eff(0.5 * (wa + wb));
  EXPECT_GT(n, 1.8);
  EXPECT_LT(n, 2.0);
}

TEST(Dispersion, FivePointLinearTableMatchesAnalyticLine) {
  std::vector<double> w, n;
  for (int k = 0; k < 5; ++k) {
    w.push_back(1.0e15 + 0.1e15 * k);
    n.push_back(2.0 + 1e-17 * w.back());
  }
  const auto m = DispersionModel::tabulated(Band::telecom, w, n);
  for (double q : {1.05e15, 1.17e15, 1.23e15, 1.38e15}) {
    const double exact = 2.0 + 1e-17 * q;
    EXPECT_NEAR(m.n_eff(q) / exact, 1.0, 1e-9);
  }
}

TEST(Dispersion, BetaAt1550nmForIndexTwo) {
  const double w = omega_of_nm(1550.0);
  EXPECT_NEAR(w, 1.2153e15, 1e-4 * 1.2153e15);
  // beta = n w / c = 2 * 2 pi / lambda
  const double oracle = 2.0 * 2.0 * std::numbers::pi / 1550e-9;
  EXPECT_NEAR(beta(constant(2.0), w), oracle, 1e-9 * oracle);
  EXPECT_NEAR(beta(constant(2.0), w), 8.106e6, 2e-4 * 8.106e6);  // quoted to 4 figures
}

TEST(Dispersion, ConstantIndexGroupVelocityIsCOverN) {
  const auto m = constant(2.0);
  EXPECT_DOUBLE_EQ(group_velocity(m, 1.2e15), c0 / 2.0);
}

TEST(Dispersion, NormalDispersionSlowsGroupVelocity) {
  const auto m = DispersionModel::taylor(Band::telecom, {1.2e15, 2.1, 0.4, 0.0}, 1.0e15, 1.4e15);
  EXPECT_GT(m.dn_domega(1.2e15), 0.0);
  EXPECT_LT(group_velocity(m, 1.2e15), c0 / m.n_eff(1.2e15));
  EXPECT_NEAR(group_index(m, 1.2e15), 2.5, 1e-12);
}

TEST(Dispersion, EvaluationOutsideRangeThrows) {
  const auto m = constant(2.0, 1.0e15, 1.5e15);
  try {
    (void)m.n_eff(1.6e15);
    FAIL() << "expected OutOfRange";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::OutOfRange);
  }
  EXPECT_THROW((void)beta(m, 0.9e15), Error);
}

TEST(Dispersion, TableRejectsBadInput) {
  EXPECT_THROW(DispersionModel::tabulated(Band::telecom, {1.0e15}, {2.0}), Error);
  EXPECT_THROW(DispersionModel::tabulated(Band::telecom, {1.0e15, 1.0e15}, {2.0, 2.1}), Error);
  EXPECT_THROW(DispersionModel::tabulated(Band::telecom, {1.1e15, 1.0e15}, {2.0, 2.1}), Error);
  EXPECT_THROW(DispersionModel::tabulated(Band::telecom, {1.0e15, 1.1e15}, {2.0, -0.1}), Error);
  EXPECT_THROW(DispersionModel::taylor(Band::telecom, {1.0e15, 0.1, -2.0, 0.0}, 1.0e15, 1.5e15), Error);
}

TEST(Dispersion, TableNumericDerivativeRejectsEndpoint) {
  const auto m = DispersionModel::tabulated(Band::telecom, {1.0e15, 1.1e15, 1.2e15}, {2.0, 2.01, 2.03});
  EXPECT_THROW((void)group_velocity(m, 1.0e15), Error);
  EXPECT_NO_THROW((void)group_velocity(m, 1.05e15));
}

TEST(Dispersion, TabulatedGroupVelocityConvergesToTaylor) {
  const TaylorIndex t{1.2e15, 2.1, 0.35, -0.4};
  const auto exact = DispersionModel::taylor(Band::telecom, t, 1.0e15, 1.4e15);
  const double probe = 1.2337e15;
  double previous = 0.0;
  for (int level = 0; level < 4; ++level) {
    const int n = 9 << level;
    std::vector<double> w(n), idx(n);
    for (int k = 0; k < n; ++k) {
      w[k] = 1.0e15 + 0.4e15 * k / (n - 1);
      idx[k] = exact.n_eff(w[k]);
    }
    const auto table = DispersionModel::tabulated(Band::telecom, w, idx);
    const double err = std::abs(group_velocity(table, probe) - group_velocity(exact, probe));
    if (level > 0) EXPECT_LE(err, 0.5 * previous) << "level " << level;
    previous = err;
  }
}

TEST(Dispersion, QpmPeriodZeroesMismatch) {
  const auto s = DispersionModel::taylor(Band::telecom, {1.2e15, 2.14, 0.3, 0.0}, 1.0e15, 1.4e15);
  const auto p = DispersionModel::taylor(Band::pump, {2.4e15, 2.18, 0.5, 0.0}, 2.0e15, 2.8e15);
  const double w0 = 1.2e15;
  for (auto conv : {QpmConvention::pi_over_lambda, QpmConvention::two_pi_over_lambda}) {
    const double period = qpm_period_for(p, s, w0, w0, conv);
    EXPECT_NEAR(delta_beta(p, s, w0, w0, period, conv), 0.0, 1e-6);
  }
}

TEST(Dispersion, IndexMatchedMismatchIsMinusPiOverPeriod) {
  const auto s = constant(2.0, 1.0e15, 1.4e15);
  const auto p = constant(2.0, 2.0e15, 2.8e15, Band::pump);
  const double period = 5e-6;
  EXPECT_NEAR(delta_beta(p, s, 1.15e15, 1.25e15, period), -std::numbers::pi / period, 1e-6);
  EXPECT_THROW((void)qpm_period_for(p, s, 1.2e15, 1.2e15), Error);
}

TEST(Dispersion, MismatchIsSymmetric) {
  const auto s = DispersionModel::taylor(Band::telecom, {1.2e15, 2.14, 0.3, -0.2}, 1.0e15, 1.4e15);
  const auto p = DispersionModel::taylor(Band::pump, {2.4e15, 2.18, 0.5, 0.1}, 2.0e15, 2.8e15);
  const double a = delta_beta(p, s, 1.13e15, 1.27e15, 7e-6);
  EXPECT_NEAR(a, delta_beta(p, s, 1.27e15, 1.13e15, 7e-6), 1e-12 * std::abs(a));
}

TEST(Dispersion, DoubledMismatchHalvesPeriod) {
  const auto s = constant(2.1, 1.0e15, 1.4e15);
  const auto p1 = constant(2.2, 2.0e15, 2.8e15, Band::pump);
  const auto p2 = constant(2.3, 2.0e15, 2.8e15, Band::pump);
  const double a = qpm_period_for(p1, s, 1.2e15, 1.2e15);
  const double b = qpm_period_for(p2, s, 1.2e15, 1.2e15);
  EXPECT_NEAR(b / a, 0.5, 1e-12);
}

TEST(Dispersion, LithiumNiobateLikePeriodIsMicrons) {
  const double ns = 2.138, np = 2.179;
  const auto s = constant(ns, 1.0e15, 1.4e15);
  const auto p = constant(np, 2.0e15, 2.8e15, Band::pump);
  const double ws = omega_of_nm(1550.0);
  // By hand: delta k = 2 pi (np/775nm - 2 ns/1550nm), Lambda = pi / delta k.
  const double oracle = 1.0 / (2.0 * (np / 775e-9 - 2.0 * ns / 1550e-9));
  const double period = qpm_period_for(p, s, ws, ws);
  EXPECT_NEAR(period / oracle, 1.0, 1e-9);
  EXPECT_GT(period, 1e-6);
  EXPECT_LT(period, 50e-6);
}

TEST(Dispersion, AngleInterpolatedIndex) {
  const double n1 = 2.21, n2 = 2.14;
  // The cos^2 term carries n1, so propagation along the ordinary axis (phi = 0)
  // sees n2 and the perpendicular direction sees n1.
  EXPECT_DOUBLE_EQ(angle_interpolated_index(n1, n2, 0.0), n2);
  EXPECT_NEAR(angle_interpolated_index(n1, n2, std::numbers::pi / 2), n1, 1e-15);
  // cos^2 = sin^2 = 1/2 at 45 degrees.
  const double oracle = n1 * n2 / std::sqrt(0.5 * (n1 * n1 + n2 * n2));
  EXPECT_NEAR(angle_interpolated_index(n1, n2, std::numbers::pi / 4), oracle, 1e-14);
  EXPECT_NEAR(oracle, 2.1741553, 1e-7);
  EXPECT_THROW((void)angle_interpolated_index(0.0, 2.0, 0.1), Error);
}

TEST(Dispersion, AngleInterpolationIsPiPeriodicAndBounded) {
  const double n1 = 2.21, n2 = 2.14;
  for (int k = 0; k < 200; ++k) {
    const double phi = 0.0314 * k;
    const double v = angle_interpolated_index(n1, n2, phi);
    EXPECT_NEAR(v, angle_interpolated_index(n1, n2, phi + std::numbers::pi), 1e-13);
    EXPECT_GE(v, n2 - 1e-15);
    EXPECT_LE(v, n1 + 1e-15);
  }
}

TEST(Dispersion, PhaseVelocityBoundedByIndexRange) {
  const auto m = DispersionModel::taylor(Band::telecom, {1.2e15, 2.1, 0.35, -0.4}, 1.0e15, 1.4e15);
  double lo = 1e9, hi = 0.0;
  for (int k = 0; k <= 100; ++k) {
    const double w = 1.0e15 + 4e12 * k;
    lo = std::min(lo, m.n_eff(w));
    hi = std::max(hi, m.n_eff(w));
  }
  for (int k = 0; k <= 100; ++k) {
    const double w = 1.0e15 + 4e12 * k;
    const double r = beta(m, w) / w * c0;
    EXPECT_GE(r, lo - 1e-12);
    EXPECT_LE(r, hi + 1e-12);
  }
}

TEST(Dispersion, ArcDiscretization) {
  const auto segs = discretize_arc(100e-6, 0.0, std::numbers::pi / 2, 4);
  ASSERT_EQ(segs.size(), 4u);
  double total = 0.0;
  for (const auto& s : segs) total += s.length;
  EXPECT_NEAR(total, 100e-6 * std::numbers::pi / 2, 1e-18);
  EXPECT_NEAR(segs.front().tangent_angle, std::numbers::pi / 16, 1e-15);
  EXPECT_THROW(validate(BendSegment{0.0, 1.0, 0.0}), Error);
  EXPECT_THROW(validate(BendSegment{1.0, 1.0, 7.0}), Error);
}
