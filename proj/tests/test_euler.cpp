#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include "ochain/euler.hpp"

using namespace ochain;

namespace {

const PotentialSpec kSoft = PotentialSpec::softened(0.2);

// A decoupled test function with random coefficients on the first `n` modes.
TestFunction random_test_function(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> g;
  TestFunction f;
  for (std::size_t k = 0; k < n; ++k) {
    f.a.push_back(g(rng) / (k + 1));
    f.b.push_back(g(rng) / (k + 1));
    f.s.push_back(g(rng) / (k + 1));
    f.q.push_back(k == 0 ? 0.0 : g(rng) / (k + 1));
  }
  return f;
}

double max_coef_diff(const TestFunction& x, const TestFunction& y) {
  double d = 0.0;
  for (std::size_t k = 0; k < x.a.size(); ++k)
    d = std::max({d, std::abs(x.a[k] - y.a[k]), std::abs(x.b[k] - y.b[k]), std::abs(x.s[k] - y.s[k]),
                  std::abs(x.q[k] - y.q[k])});
  return d;
}

}  // namespace

TEST(PredictedCovariance, Examples) {
  const auto cp = make_canonical(kSoft, 1.4, 0.3);
  const auto ls = linearized_system(cp);
  const Mode s0{Branch::sine, 0};
  EXPECT_NEAR(predicted_mode_covariance(ls, s0, s0, 0.0), 1.0 / 1.4, 1e-14);

  const auto hl = linearized_system(make_canonical(PotentialSpec{}, 1.0, 0.0));
  EXPECT_NEAR(predicted_mode_covariance(hl, s0, s0, 2.0), -1.0, 1e-12);

  const Mode e2{Branch::entropy_sine, 2};
  for (double t : {0.0, 0.3, 5.0})
    EXPECT_EQ(predicted_mode_covariance(ls, e2, e2, t), predicted_mode_covariance(ls, e2, e2, 0.0));
  EXPECT_NEAR(predicted_mode_covariance(ls, e2, e2, 0.0), cp.beta * cp.beta * cp.d2G_beta(), 1e-12);

  EXPECT_EQ(predicted_mode_covariance(ls, s0, {Branch::sine, 1}, 0.7), 0.0);
  EXPECT_EQ(predicted_mode_covariance(ls, {Branch::cosine, 1}, {Branch::entropy_cosine, 1}, 0.7), 0.0);
  EXPECT_THROW(predicted_mode_covariance(ls, s0, s0, -1.0), domain_error);
}

// The stationary covariances at t = 0 are the Q entries; cross pairs start at 0.
TEST(PredictedCovariance, EqualTimeValuesAreQ) {
  const auto cp = make_canonical(kSoft, 0.7, -0.6);
  const auto ls = linearized_system(cp);
  for (int n : {0, 3}) {
    EXPECT_NEAR(predicted_mode_covariance(ls, {Branch::sine, n}, {Branch::sine, n}, 0.0), cp.Q(0, 0), 1e-12);
    EXPECT_NEAR(predicted_mode_covariance(ls, {Branch::cosine, n}, {Branch::cosine, n}, 0.0), cp.Q(1, 1), 1e-12);
    EXPECT_NEAR(predicted_mode_covariance(ls, {Branch::sine, n}, {Branch::cosine, n}, 0.0), 0.0, 1e-15);
  }
}

// Equal-time variance against the continuum pairing int_0^1 H^T Sigma H dx of the mode's own
// profile (midpoint rule), every branch including the n = 0 entropy profiles.
TEST(PredictedCovariance, EqualTimeMatchesProfilePairing) {
  const auto cp = make_canonical(kSoft, 1.2, 0.4);
  const auto ls = linearized_system(cp);
  for (auto b : {Branch::sine, Branch::cosine, Branch::entropy_sine, Branch::entropy_cosine})
    for (int n : {0, 1, 2}) {
      const Mode m{b, n};
      const auto sh = mode_shape(cp, m);
      const int grid = 20000;
      double pair = 0.0;
      for (int j = 0; j < grid; ++j) {
        const Eigen::Vector3d h = sh.at((j + 0.5) / grid);
        pair += h.dot(cp.Sigma * h) / grid;
      }
      EXPECT_NEAR(predicted_mode_covariance(ls, m, m, 0.0), pair, 1e-6) << m.label();
    }
}

TEST(PredictedCovariance, SatisfiesTheWaveEquation) {
  const auto cp = make_canonical(kSoft, 1.1, 0.2);
  const auto ls = linearized_system(cp);
  const double dt = 1e-4;
  for (auto [a, b] : {std::pair{Branch::sine, Branch::sine}, {Branch::cosine, Branch::cosine},
                      {Branch::sine, Branch::cosine}, {Branch::cosine, Branch::sine}})
    for (int n : {0, 2})
      for (double t : {0.3, 1.1}) {
        const Mode ma{a, n}, mb{b, n};
        auto C = [&](double s) { return predicted_mode_covariance(ls, ma, mb, s); };
        const double d2 = (C(t + dt) - 2 * C(t) + C(t - dt)) / (dt * dt);
        const double w = cp.c * ma.wavenumber();
        EXPECT_NEAR(d2, -w * w * C(t), 1e-5 * (1 + w * w)) << ma.label() << "/" << mb.label() << " t=" << t;
      }
}

TEST(LinearizedSystem, EigenvaluesAreZeroAndPlusMinusC) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> ub(0.5, 2.0), ut(-1.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    const auto ls = linearized_system(make_canonical(kSoft, ub(rng), ut(rng)));
    Eigen::EigenSolver<Eigen::Matrix3d> es(ls.B);
    std::vector<double> ev;
    for (int k = 0; k < 3; ++k) {
      EXPECT_NEAR(es.eigenvalues()[k].imag(), 0.0, 1e-10);
      ev.push_back(es.eigenvalues()[k].real());
    }
    std::sort(ev.begin(), ev.end());
    EXPECT_NEAR(ev[0], -ls.c, 1e-10);
    EXPECT_NEAR(ev[1], 0.0, 1e-10);
    EXPECT_NEAR(ev[2], ls.c, 1e-10);
  }
}

TEST(BackwardEvolve, EntropyOnlyFunctionIsFrozen) {
  const auto ls = linearized_system(make_canonical(kSoft, 1.0, 0.5));
  TestFunction f;
  f.a = {0, 0, 0};
  f.b = {0, 0, 0};
  f.s = {0.3, -1.0, 0.5};
  f.q = {0.0, 2.0, 0.1};
  const auto g = backward_evolve(ls, f, 3.7);
  EXPECT_EQ(max_coef_diff(f, g), 0.0);
}

// Oracle: the pair (a_n, c b_n) turns by the rotation matrix of angle c theta_n t.
TEST(BackwardEvolve, SingleModeRotatesAndKeepsItsWeightedNorm) {
  const auto ls = linearized_system(make_canonical(kSoft, 0.9, -0.3));
  const double c = ls.c;
  for (int n : {0, 1, 4}) {
    TestFunction f;
    f.a.assign(n + 1, 0.0);
    f.b.assign(n + 1, 0.0);
    f.s.assign(n + 1, 0.0);
    f.q.assign(n + 1, 0.0);
    f.a[n] = 0.8;
    f.b[n] = -0.35;
    const double th = (2.0 * n + 1.0) * std::numbers::pi / 2.0;
    for (double t : {0.1, 0.77, 2.5}) {
      const auto g = backward_evolve(ls, f, t);
      const double phi = c * th * t;
      Eigen::Matrix2d rot;
      rot << std::cos(phi), -std::sin(phi), std::sin(phi), std::cos(phi);
      const Eigen::Vector2d want = rot * Eigen::Vector2d(0.8, -0.35 * c);
      EXPECT_NEAR(g.a[n], want[0], 1e-13);
      EXPECT_NEAR(c * g.b[n], want[1], 1e-13);
      EXPECT_NEAR(std::hypot(g.a[n], c * g.b[n]), std::hypot(0.8, 0.35 * c), 1e-13);
    }
  }
}

TEST(BackwardEvolve, ReversibleAndSemigroup) {
  const auto ls = linearized_system(make_canonical(kSoft, 1.3, 0.7));
  std::mt19937_64 rng(13);
  const auto f = random_test_function(rng, 8);
  EXPECT_LT(max_coef_diff(backward_evolve(ls, backward_evolve(ls, f, 1.7), -1.7), f), 1e-10);
  const auto two = backward_evolve(ls, backward_evolve(ls, f, 0.4), 0.9);
  EXPECT_LT(max_coef_diff(two, backward_evolve(ls, f, 1.3)), 1e-10);
}

// d/dt H = B^T d/dx H checked by central differences in t and x.
TEST(BackwardEvolve, SolvesTheBackwardSystem) {
  const auto ls = linearized_system(make_canonical(kSoft, 0.8, 0.4));
  std::mt19937_64 rng(14);
  const auto f = random_test_function(rng, 5);
  const double t = 0.6, dt = 1e-5, dx = 1e-5;
  const auto up = backward_evolve(ls, f, t + dt), dn = backward_evolve(ls, f, t - dt), at = backward_evolve(ls, f, t);
  for (double x : {0.1, 0.45, 0.9}) {
    const Eigen::Vector3d Ht = (up.value(ls, x) - dn.value(ls, x)) / (2 * dt);
    const Eigen::Vector3d Hx = (at.value(ls, x + dx) - at.value(ls, x - dx)) / (2 * dx);
    EXPECT_LT((Ht - ls.B.transpose() * Hx).cwiseAbs().maxCoeff(), 1e-6) << "x = " << x;
  }
}

TEST(BackwardEvolve, ValuesStayInTheCore) {
  const auto ls = linearized_system(make_canonical(kSoft, 1.0, -0.8));
  std::mt19937_64 rng(15);
  const auto f = random_test_function(rng, 6);
  for (double t : {0.0, 0.5, 3.0}) {
    const auto g = backward_evolve(ls, f, t);
    EXPECT_NEAR(g.value(ls, 0.0)[0], 0.0, 1e-12);
    const auto v1 = g.value(ls, 1.0);
    EXPECT_NEAR(v1[1] + ls.tau * v1[2], 0.0, 1e-12);
  }
}

TEST(ProjectTestFunction, RecoversCoefficientsAndRejectsCoreViolations) {
  const auto ls = linearized_system(make_canonical(kSoft, 1.2, 0.3));
  std::mt19937_64 rng(16);
  const auto f = random_test_function(rng, 4);
  const auto g = project_test_function(ls, [&](double x) { return f.value(ls, x); }, 4);
  EXPECT_LT(max_coef_diff(f, g), 1e-9);

  try {
    project_test_function(ls, [](double) { return Eigen::Vector3d(1.0, 0.0, 0.0); }, 4);
    FAIL() << "h1(0) != 0 accepted";
  } catch (const domain_error& e) {
    EXPECT_NE(std::string(e.what()).find("h1(0)"), std::string::npos);
  }
  try {
    project_test_function(ls, [](double x) { return Eigen::Vector3d(std::sin(x), 1.0, 0.0); }, 4);
    FAIL() << "h2(1) + tau h3(1) != 0 accepted";
  } catch (const domain_error& e) {
    EXPECT_NE(std::string(e.what()).find("h2(1)"), std::string::npos);
  }
}

TEST(Compatibility, Examples) {
  const auto ls = linearized_system(make_canonical(kSoft, 1.0, 0.4));
  EXPECT_TRUE(check_compatibility([](double) { return Eigen::Vector3d::Zero(); }, ls.tau));
  EXPECT_FALSE(check_compatibility([](double x) { return Eigen::Vector3d(x, 0.0, 0.0); }, ls.tau));

  // single sine mode: derivative sqrt2 theta_0 at the left wall
  TestFunction one;
  one.a = {1.0};
  one.b = {0.0};
  one.s = {0.0};
  one.q = {0.0};
  EXPECT_FALSE(check_compatibility([&](double x) { return one.value(ls, x); }, ls.tau));

  // cancel the first derivatives: sum a_n theta_n = 0 at 0, sum b_n theta_n (-1)^n = 0 at 1;
  // the second derivatives of these bases vanish at the relevant ends by themselves
  const double t0 = std::numbers::pi / 2, t1 = 3 * std::numbers::pi / 2;
  TestFunction flat;
  flat.a = {1.0, -t0 / t1};
  flat.b = {0.5, 0.5 * t0 / t1};
  flat.s = {0.2, 0.0};
  flat.q = {0.0, 0.3};
  const auto rep = check_compatibility_report([&](double x) { return flat.value(ls, x); }, ls.tau);
  EXPECT_TRUE(rep.ok) << rep.d1_left << " " << rep.d1_right << " " << rep.d2_left << " " << rep.d2_right;
}
