#ifndef OCHAIN_EULER_HPP
#define OCHAIN_EULER_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "error.hpp"
#include "fluctuation.hpp"
#include "thermo.hpp"

namespace ochain {

struct LinearizedSystem {
  Eigen::Matrix3d B;
  double c = 1.0;
  Eigen::Matrix3d R, Q;
  double beta = 1.0, tau = 0.0, tau_r = 1.0, tau_e = 0.0;
};

inline LinearizedSystem linearized_system(const CanonicalParams& cp) {
  LinearizedSystem ls;
  ls.B << 0, cp.tau_r, cp.tau_e, 1, 0, 0, cp.tau, 0, 0;
  ls.c = cp.c;
  ls.R = cp.R;
  ls.Q = cp.Q;
  ls.beta = cp.beta;
  ls.tau = cp.tau;
  ls.tau_r = cp.tau_r;
  ls.tau_e = cp.tau_e;
  return ls;
}

// E[u(t, R a) u(0, R b)] for the stationary solution, i.e. the limit of E[Y(t, R a) Y(0, R b)].
inline double predicted_mode_covariance(const LinearizedSystem& ls, Mode a, Mode b, double t) {
  if (!(t >= 0.0)) throw domain_error("t must be >= 0");
  if (a.n != b.n) return 0.0;
  const double w = ls.c * a.wavenumber() * t;
  const double ib = 1.0 / ls.beta;
  const bool ea = is_entropy(a.branch), eb = is_entropy(b.branch);
  // the n = 0 entropy profiles are sqrt2 (cosine, squared norm 2) and 0 (sine)
  if (ea || eb) {
    if (a.branch != b.branch) return 0.0;
    if (a.n == 0) return a.branch == Branch::entropy_cosine ? 2.0 * ls.Q(2, 2) : 0.0;
    return ls.Q(2, 2);
  }
  if (a.branch == Branch::sine && b.branch == Branch::sine) return ib * std::cos(w);
  if (a.branch == Branch::cosine && b.branch == Branch::cosine) return ls.c * ls.c * ib * std::cos(w);
  if (a.branch == Branch::sine) return -ls.c * ib * std::sin(w);
  return ls.c * ib * std::sin(w);
}

// A test function in the decoupled coordinates g = R^-1 h:
//   g1 = sum_n a_n mu_{1,n},  g2 = sum_n b_n mu_{2,n},
//   g3 = s_0 + sum_{n>=1} (s_n sqrt2 sin(kappa_n x) + q_n sqrt2 cos(kappa_n x))
// g1(0) = 0 and g2(1) = 0 hold term by term, which is h in C*(tau).
struct TestFunction {
  std::vector<double> a, b, s, q;

  std::size_t modes() const { return a.size(); }

  Eigen::Vector3d decoupled(double x) const {
    Eigen::Vector3d g = Eigen::Vector3d::Zero();
    for (std::size_t n = 0; n < a.size(); ++n) {
      const double th = (2.0 * n + 1.0) * std::numbers::pi / 2.0;
      g[0] += a[n] * std::numbers::sqrt2 * std::sin(th * x);
      g[1] += b[n] * std::numbers::sqrt2 * std::cos(th * x);
    }
    if (!s.empty()) g[2] += s[0];
    for (std::size_t n = 1; n < s.size(); ++n) {
      const double k = 2.0 * n * std::numbers::pi;
      g[2] += std::numbers::sqrt2 * (s[n] * std::sin(k * x) + q[n] * std::cos(k * x));
    }
    return g;
  }

  Eigen::Vector3d value(const LinearizedSystem& ls, double x) const { return ls.R * decoupled(x); }
};

// Projects h onto the first `modes` basis functions of each coordinate (midpoint rule).
// Rejects h outside C*(tau).
inline TestFunction project_test_function(const LinearizedSystem& ls, const std::function<Eigen::Vector3d(double)>& h,
                                          std::size_t modes, std::size_t grid = 4096, double tol = 1e-10) {
  const Eigen::Vector3d h0 = h(0.0), h1 = h(1.0);
  const double scale = 1.0 + h0.cwiseAbs().maxCoeff() + h1.cwiseAbs().maxCoeff();
  if (std::abs(h0[0]) > tol * scale)
    throw domain_error("test function violates h1(0) = 0 (h1(0) = " + std::to_string(h0[0]) + ")");
  const double edge = h1[1] + ls.tau * h1[2];
  if (std::abs(edge) > tol * scale)
    throw domain_error("test function violates h2(1) + tau h3(1) = 0 (value " + std::to_string(edge) + ")");
  const Eigen::Matrix3d Rinv = ls.R.inverse();
  TestFunction f;
  f.a.assign(modes, 0.0);
  f.b.assign(modes, 0.0);
  f.s.assign(modes, 0.0);
  f.q.assign(modes, 0.0);
  for (std::size_t j = 0; j < grid; ++j) {
    const double x = (j + 0.5) / grid;
    const Eigen::Vector3d g = Rinv * h(x);
    for (std::size_t n = 0; n < modes; ++n) {
      const double th = (2.0 * n + 1.0) * std::numbers::pi / 2.0;
      const double k = 2.0 * n * std::numbers::pi;
      f.a[n] += g[0] * std::numbers::sqrt2 * std::sin(th * x) / grid;
      f.b[n] += g[1] * std::numbers::sqrt2 * std::cos(th * x) / grid;
      if (n == 0) {
        f.s[0] += g[2] / grid;
      } else {
        f.s[n] += g[2] * std::numbers::sqrt2 * std::sin(k * x) / grid;
        f.q[n] += g[2] * std::numbers::sqrt2 * std::cos(k * x) / grid;
      }
    }
  }
  return f;
}

// H(t) solving dH/dt + L* H = 0, i.e. dH/dt = B^T dH/dx. In the decoupled coordinates
// da_n/dt = -c^2 theta_n b_n, db_n/dt = theta_n a_n, and g3 is frozen.
inline TestFunction backward_evolve(const LinearizedSystem& ls, const TestFunction& h, double t) {
  TestFunction out = h;
  const double c = ls.c;
  for (std::size_t n = 0; n < h.a.size(); ++n) {
    const double th = (2.0 * n + 1.0) * std::numbers::pi / 2.0;
    const double cs = std::cos(c * th * t), sn = std::sin(c * th * t);
    out.a[n] = h.a[n] * cs - c * h.b[n] * sn;
    out.b[n] = h.b[n] * cs + h.a[n] / c * sn;
  }
  const Eigen::Vector3d v0 = out.value(ls, 0.0), v1 = out.value(ls, 1.0);
  const double scale = 1.0 + std::abs(v1[1]) + std::abs(v1[2]);
  if (std::abs(v0[0]) > 1e-10 || std::abs(v1[1] + ls.tau * v1[2]) > 1e-10 * scale)
    throw numerical_error("backward evolution left C*(tau): H1(t,0) = " + std::to_string(v0[0]) +
                          ", H2(t,1) + tau H3(t,1) = " + std::to_string(v1[1] + ls.tau * v1[2]));
  return out;
}

// The edge conditions on h = H(0): d/dx h1 -> 0 at 0+, d/dx (h2 + tau h3) -> 0 at 1-, and
// the second time derivatives, which by the equation equal c^2 h1''(0) and
// c^2 (h2 + tau h3)''(1). One-sided fourth-order differences with step dx.
struct CompatibilityReport {
  double d1_left = 0.0, d1_right = 0.0, d2_left = 0.0, d2_right = 0.0;
  bool ok = false;
};

inline CompatibilityReport check_compatibility_report(const std::function<Eigen::Vector3d(double)>& h, double tau,
                                                      double dx = 1e-3, double tol = 1e-6) {
  auto f1 = [&](double x) { return h(x)[0]; };
  auto f2 = [&](double x) { const auto v = h(x); return v[1] + tau * v[2]; };
  // forward differences at x0 stepping by s (s < 0 steps leftwards)
  auto d1 = [&](auto&& f, double x0, double s) {
    return (-25.0 * f(x0) + 48.0 * f(x0 + s) - 36.0 * f(x0 + 2 * s) + 16.0 * f(x0 + 3 * s) - 3.0 * f(x0 + 4 * s)) /
           (12.0 * s);
  };
  auto d2 = [&](auto&& f, double x0, double s) {
    return (45.0 * f(x0) - 154.0 * f(x0 + s) + 214.0 * f(x0 + 2 * s) - 156.0 * f(x0 + 3 * s) + 61.0 * f(x0 + 4 * s) -
            10.0 * f(x0 + 5 * s)) /
           (12.0 * s * s);
  };
  CompatibilityReport r;
  r.d1_left = d1(f1, 0.0, dx);
  r.d1_right = d1(f2, 1.0, -dx);
  r.d2_left = d2(f1, 0.0, dx);
  r.d2_right = d2(f2, 1.0, -dx);
  double scale = 1.0;
  for (double x : {0.0, 0.5, 1.0}) scale = std::max(scale, h(x).cwiseAbs().maxCoeff());
  r.ok = std::abs(r.d1_left) <= tol * scale && std::abs(r.d1_right) <= tol * scale &&
         std::abs(r.d2_left) <= 1e3 * tol * scale && std::abs(r.d2_right) <= 1e3 * tol * scale;
  return r;
}

inline bool check_compatibility(const std::function<Eigen::Vector3d(double)>& h, double tau) {
  return check_compatibility_report(h, tau).ok;
}

}  // namespace ochain

#endif
