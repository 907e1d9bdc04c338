#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "ochain/two_point.hpp"

using namespace ochain;
using std::numbers::pi;

TEST(TwoPoint, DegeneratePair) {
  const auto c = to_circle(PotentialSpec::softened(0.2), {0.3, -0.7}, {0.3, -0.7});
  EXPECT_EQ(c.E, 0.0);
  EXPECT_EQ(c.theta, 0.0);
  EXPECT_DOUBLE_EQ(c.p, 0.3);
  EXPECT_DOUBLE_EQ(c.r, -0.7);
}

TEST(TwoPoint, HarmonicHandExample) {
  // u = 2, v = 2: X = 2/(2 sqrt2), g = (1/2 + 1/2)/2 = 1/2, so E = 1/2 + 1/2, theta = pi/4
  const auto c = to_circle(PotentialSpec::harmonic(), {1, 1}, {-1, -1});
  EXPECT_NEAR(c.E, 1.0, 1e-15);
  EXPECT_NEAR(c.theta, pi / 4, 1e-15);
  EXPECT_NEAR(std::sqrt(c.E) * std::cos(c.theta), std::sqrt(2.0) * 2 / 4, 1e-15);
  EXPECT_EQ(c.p, 0.0);
  EXPECT_EQ(c.r, 0.0);
}

TEST(TwoPoint, RejectsNegativeEnergy) {
  EXPECT_THROW(from_circle(PotentialSpec::harmonic(), {0, 0, -1e-3, 0}), domain_error);
}

TEST(TwoPointProperty, RoundTripIsIdentity) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0.0, 1.5);
  for (auto spec : {PotentialSpec::harmonic(), PotentialSpec::softened(0.2), PotentialSpec::softened(2.0)}) {
    for (int i = 0; i < 10000; ++i) {
      const Site a{n(rng), n(rng)}, b{n(rng), n(rng)};
      const auto c = to_circle(spec, a, b);
      ASSERT_GE(c.theta, 0.0);
      ASSERT_LT(c.theta, 2 * pi);
      const auto [x, y] = from_circle(spec, c);
      ASSERT_NEAR(x.p, a.p, 1e-10);
      ASSERT_NEAR(x.r, a.r, 1e-10);
      ASSERT_NEAR(y.p, b.p, 1e-10);
      ASSERT_NEAR(y.r, b.r, 1e-10);
    }
  }
}

TEST(TwoPointProperty, RotationPreservesBondSums) {
  const auto spec = PotentialSpec::softened(0.2);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 2 * pi);
  for (int i = 0; i < 2000; ++i) {
    const Site a{n(rng), n(rng)}, b{n(rng), n(rng)};
    auto c = to_circle(spec, a, b);
    c.theta = u(rng);
    const auto [x, y] = from_circle(spec, c);
    ASSERT_NEAR(x.p + y.p, a.p + b.p, 1e-12);
    ASSERT_NEAR(x.r + y.r, a.r + b.r, 1e-12);
    const double e0 = a.p * a.p / 2 + spec.V(a.r) + b.p * b.p / 2 + spec.V(b.r);
    const double e1 = x.p * x.p / 2 + spec.V(x.r) + y.p * y.p / 2 + spec.V(y.r);
    ASSERT_NEAR(e1, e0, 1e-12 * (1 + e0));
  }
}

TEST(TwoPoint, HarmonicJacobian) {
  const auto h = PotentialSpec::harmonic();
  EXPECT_NEAR(jacobian(h, to_circle(h, {0.2, 3.0}, {-1.0, 0.5})), 1 / std::sqrt(2.0), 1e-14);
  const auto b = jacobian_bounds(h);
  EXPECT_DOUBLE_EQ(b.lower, 1 / std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(b.upper, 1 / std::sqrt(2.0));
}

TEST(TwoPoint, JacobianLimitAtEqualStretch) {
  const auto s = PotentialSpec::softened(0.2);
  // sin(theta) = 0 means r1 = r2
  const TwoPointCoords c{0.1, 0.8, 0.5, 0.0};
  EXPECT_NEAR(jacobian(s, c), std::sqrt(2.0) / (2 * std::sqrt(s.d2V(0.8))), 1e-15);
  // continuity: tiny separation approaches the limit
  const TwoPointCoords d{0.1, 0.8, 0.5, 1e-7};
  EXPECT_NEAR(jacobian(s, d), jacobian(s, c), 1e-12);
}

TEST(TwoPointProperty, JacobianWithinBounds) {
  const auto s = PotentialSpec::softened(0.2);
  const auto b = jacobian_bounds(s);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int i = 0; i < 10000; ++i) {
    const auto c = to_circle(s, {n(rng), n(rng)}, {n(rng), n(rng)});
    const double j = jacobian(s, c);
    ASSERT_GE(j, b.lower);
    ASSERT_LE(j, b.upper);
  }
}

TEST(TwoPoint, JacobianDerivativeMatchesFiniteDifference) {
  const auto s = PotentialSpec::softened(0.2);
  const BondCircle bc(s, 0.4, 1.3);
  for (double th = 0.0; th < 2 * pi; th += 0.05) {
    const double h = 1e-6;
    const double fd = (bc.at(th + h).J - bc.at(th - h).J) / (2 * h);
    ASSERT_NEAR(bc.at(th).dJ, fd, 1e-8) << th;
  }
  // near the equal-stretch points the series branch takes over
  for (double th : {1e-6, pi - 1e-6, pi + 3e-5}) {
    const double h = 1e-7;
    const double fd = (bc.at(th + h).J - bc.at(th - h).J) / (2 * h);
    EXPECT_NEAR(bc.at(th).dJ, fd, 1e-7);
  }
}

// The noise vector field of a bond, Y = (V'(r2) - V'(r1))(d_p1 - d_p2) - (p2 - p1)(d_r1 - d_r2),
// acts on the circle angle as Y theta = sqrt2 / J.
TEST(TwoPoint, NoiseVectorFieldIsScaledAngularDerivative) {
  const auto s = PotentialSpec::softened(0.2);
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const Site a{n(rng), n(rng)}, b{n(rng), n(rng)};
    const double yp = s.dV(b.r) - s.dV(a.r), yr = -(b.p - a.p);
    auto theta_at = [&](double eps) {
      return to_circle(s, {a.p + eps * yp, a.r + eps * yr}, {b.p - eps * yp, b.r - eps * yr}).theta;
    };
    const double eps = 1e-6;
    double dth = theta_at(eps) - theta_at(-eps);
    if (dth > pi) dth -= 2 * pi;
    if (dth < -pi) dth += 2 * pi;
    const auto c = to_circle(s, a, b);
    ASSERT_NEAR(dth / (2 * eps), std::sqrt(2.0) / jacobian(s, c), 1e-6);
    // E is invariant along Y
    auto energy_at = [&](double e) {
      return to_circle(s, {a.p + e * yp, a.r + e * yr}, {b.p - e * yp, b.r - e * yr}).E;
    };
    ASSERT_NEAR((energy_at(eps) - energy_at(-eps)) / (2 * eps), 0.0, 1e-7 * (1 + c.E));
  }
}
