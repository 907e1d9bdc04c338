#ifndef OCHAIN_THERMO_HPP
#define OCHAIN_THERMO_HPP

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <numbers>
#include <sstream>
#include <string>

#include "error.hpp"
#include "potential.hpp"

namespace ochain {

// Canonical multipliers. The tilt vector is lambda = (beta*tau, -beta).
struct Lambda {
  double beta = 1.0;
  double tau = 0.0;

  Eigen::Vector2d vec() const { return {beta * tau, -beta}; }
  static Lambda from_vec(const Eigen::Vector2d& l) {
    if (!(l[1] < 0.0)) throw domain_error("lambda[1] must be negative");
    return {-l[1], l[0] / -l[1]};
  }
  void validate() const {
    if (!(beta > 0.0) || !std::isfinite(beta))
      throw domain_error("beta must be positive and finite, got " + std::to_string(beta));
    if (!std::isfinite(tau)) throw domain_error("tau must be finite");
  }
};

// Single-site law of (p, r) under the tilt: density ~ exp(-beta p^2/2 - beta V(r) + beta tau r).
struct TiltedMoments {
  double G = 0.0;             // Gibbs potential
  double r_mean = 0.0;        // E r
  double e_mean = 0.0;        // E e, e = p^2/2 + V(r)
  double mean_force = 0.0;    // E V'(r), equals tau
  Eigen::Matrix2d hessian;    // Cov of (r, e) = G''(lambda)
};

namespace detail {

// Solves V'(m) = tau; V' is increasing with slope in [d-, d+].
inline double tilted_mode(const PotentialSpec& spec, double tau) {
  const auto cb = curvature_bounds(spec);
  double lo = std::min(tau / cb.upper, tau / cb.lower);
  double hi = std::max(tau / cb.upper, tau / cb.lower);
  double m = tau / spec.d2V(0.0);
  for (int it = 0; it < 100; ++it) {
    const double f = spec.dV(m) - tau;
    if (f > 0.0) hi = m; else lo = m;
    double next = m - f / spec.d2V(m);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - m) <= 1e-16 * (1.0 + std::abs(m))) return next;
    m = next;
  }
  return m;
}

class TiltedIntegrator {
 public:
  TiltedIntegrator(const PotentialSpec& spec, Lambda lam) : spec_(spec), lam_(lam) {
    lam.validate();
    const auto cb = curvature_bounds(spec);
    m_ = tilted_mode(spec, lam.tau);
    vm_ = spec.V(m_);
    // exp(phi) <= exp(-beta d- (r-m)^2 / 2); the tail beyond W is below e^-60
    half_width_ = std::sqrt(120.0 / (lam.beta * cb.lower));
  }

  double mode() const { return m_; }
  // log of the unnormalized density at the mode
  double log_peak() const { return -lam_.beta * vm_ + lam_.beta * lam_.tau * m_; }

  double weight(double r) const {
    const double d = r - m_;
    return std::exp(-lam_.beta * (spec_.V(r) - vm_) + lam_.beta * lam_.tau * d);
  }

  template <class F>
  double integrate(F&& f, const char* what) const {
    using boost::math::quadrature::gauss_kronrod;
    double err = 0.0, l1 = 0.0;
    const double a = m_ - half_width_, b = m_ + half_width_;
    auto g = [&](double r) { return f(r) * weight(r); };
    const double v = gauss_kronrod<double, 61>::integrate(g, a, b, 20, 1e-14, &err, &l1);
    if (!(err <= 1e-11 * std::max(l1, 1e-300)) || !std::isfinite(v)) {
      std::ostringstream os;
      os << "quadrature for " << what << " did not converge on [" << a << ", " << b
         << "] (beta=" << lam_.beta << ", tau=" << lam_.tau << "): estimate " << v
         << ", error " << err << ", L1 " << l1;
      throw numerical_error(os.str());
    }
    return v;
  }

 private:
  PotentialSpec spec_;
  Lambda lam_;
  double m_ = 0.0, vm_ = 0.0, half_width_ = 0.0;
};

}  // namespace detail

inline TiltedMoments tilted_moments(const PotentialSpec& spec, Lambda lam) {
  const detail::TiltedIntegrator q(spec, lam);
  const double m = q.mode();
  const double z = q.integrate([](double) { return 1.0; }, "normalization");
  const double dr = q.integrate([&](double r) { return r - m; }, "mean stretch") / z;
  const double rm = m + dr;
  const double ev = q.integrate([&](double r) { return spec.V(r); }, "mean potential") / z;
  const double var_r =
      q.integrate([&](double r) { return (r - rm) * (r - rm); }, "stretch variance") / z;
  const double cov_rv =
      q.integrate([&](double r) { return (r - rm) * (spec.V(r) - ev); }, "stretch-energy covariance") / z;
  const double var_v =
      q.integrate([&](double r) { const double d = spec.V(r) - ev; return d * d; }, "energy variance") / z;
  const double mf = q.integrate([&](double r) { return spec.dV(r); }, "mean force") / z;

  const double b = lam.beta;
  TiltedMoments t;
  t.G = std::log(z) + q.log_peak() + 0.5 * std::log(2.0 * std::numbers::pi / b);
  t.r_mean = rm;
  t.e_mean = 0.5 / b + ev;
  t.mean_force = mf;
  t.hessian << var_r, cov_rv, cov_rv, var_v + 0.5 / (b * b);
  return t;
}

inline double gibbs_potential(const PotentialSpec& spec, Lambda lam) {
  return tilted_moments(spec, lam).G;
}

struct Means {
  double r, e;
};

inline Means mean_quantities(const PotentialSpec& spec, Lambda lam) {
  const auto t = tilted_moments(spec, lam);
  return {t.r_mean, t.e_mean};
}

// Covariance of (p, r, e) under the single-site Gibbs law.
inline Eigen::Matrix3d covariance(const PotentialSpec& spec, Lambda lam) {
  const auto t = tilted_moments(spec, lam);
  Eigen::Matrix3d s = Eigen::Matrix3d::Zero();
  s(0, 0) = 1.0 / lam.beta;
  s.block<2, 2>(1, 1) = t.hessian;
  return s;
}

struct ThermoPoint {
  double r = 0.0, e = 0.0;
  double S = 0.0;
  double beta = 1.0, tau = 0.0;
  int iterations = 0;
};

namespace detail {

// Nested bisection: for fixed beta, r_mean is increasing in tau; along that curve
// e_mean is decreasing in beta.
inline Lambda invert_by_bisection(const PotentialSpec& spec, double r, double e, Lambda start) {
  using boost::math::tools::toms748_solve;
  auto tol = [](double a, double b) { return std::abs(b - a) <= 1e-15 * (1.0 + std::abs(a)); };
  auto expand = [](auto&& f, double x0, double step) {
    double lo = x0 - step, hi = x0 + step;
    double flo = f(lo), fhi = f(hi);
    for (int k = 0; k < 200 && flo * fhi > 0.0; ++k) {
      step *= 2.0;
      if (flo > 0.0) lo -= step; else hi += step;
      flo = f(lo);
      fhi = f(hi);
    }
    if (flo * fhi > 0.0) throw numerical_error("could not bracket the tension");
    return std::pair{lo, hi};
  };
  auto tau_for = [&](double beta) {
    auto f = [&](double tau) { return tilted_moments(spec, {beta, tau}).r_mean - r; };
    auto [lo, hi] = expand(f, start.tau, 1.0);
    std::uintmax_t it = 200;
    auto res = toms748_solve(f, lo, hi, tol, it);
    return 0.5 * (res.first + res.second);
  };
  auto g = [&](double logb) {
    const double b = std::exp(logb);
    return tilted_moments(spec, {b, tau_for(b)}).e_mean - e;
  };
  auto [lo, hi] = expand(g, std::log(start.beta), 0.5);
  std::uintmax_t it = 200;
  auto res = toms748_solve(g, lo, hi, tol, it);
  const double b = std::exp(0.5 * (res.first + res.second));
  return {b, tau_for(b)};
}

}  // namespace detail

// S(r,e) = -sup_lambda {lambda.(r,e) - G(lambda)}, with multipliers (beta, tau).
inline ThermoPoint entropy_and_multipliers(const PotentialSpec& spec, double r, double e) {
  if (!std::isfinite(r) || !std::isfinite(e) || !(e > spec.V(r)))
    throw domain_error("entropy needs e > V(r); got r=" + std::to_string(r) +
                       ", e=" + std::to_string(e));
  const Eigen::Vector2d u(r, e);
  Lambda lam{1.0 / (e - spec.V(r)), spec.dV(r)};
  auto objective = [&](const TiltedMoments& t, const Lambda& l) { return t.G - l.vec().dot(u); };

  TiltedMoments t = tilted_moments(spec, lam);
  const double scale = 1.0 + std::abs(r) + std::abs(e);
  ThermoPoint out{r, e};
  bool converged = false;
  for (int it = 0; it < 100; ++it) {
    const Eigen::Vector2d grad(t.r_mean - r, t.e_mean - e);
    out.iterations = it;
    if (grad.norm() <= 1e-13 * scale) { converged = true; break; }
    const Eigen::Vector2d step = -t.hessian.ldlt().solve(grad);
    const double f0 = objective(t, lam);
    double s = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls, s *= 0.5) {
      const Eigen::Vector2d cand = lam.vec() + s * step;
      if (!(cand[1] < 0.0)) continue;
      const Lambda lc = Lambda::from_vec(cand);
      const TiltedMoments tc = tilted_moments(spec, lc);
      // Armijo test with slack for rounding once we are at the bottom
      if (objective(tc, lc) <= f0 + 1e-4 * s * grad.dot(step) + 1e-15 * std::abs(f0)) {
        lam = lc;
        t = tc;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  if (!converged) {
    lam = detail::invert_by_bisection(spec, r, e, lam);
    t = tilted_moments(spec, lam);
    const Eigen::Vector2d grad(t.r_mean - r, t.e_mean - e);
    if (!(grad.norm() <= 1e-9 * scale)) {
      std::ostringstream os;
      os << "Legendre inversion failed at (r, e) = (" << r << ", " << e << "): last beta "
         << lam.beta << ", tau " << lam.tau << ", residual " << grad.norm();
      throw numerical_error(os.str());
    }
  }
  out.beta = lam.beta;
  out.tau = lam.tau;
  out.S = t.G - lam.vec().dot(u);
  return out;
}

struct LinearCoefficients {
  double tau_r, tau_e, c;
};

inline LinearCoefficients linear_coefficients_from(const TiltedMoments& t, Lambda lam) {
  const Eigen::Vector2d rhs(1.0 / lam.beta, lam.tau / lam.beta);
  const Eigen::Vector2d x = t.hessian.ldlt().solve(rhs);
  if (!x.allFinite()) throw numerical_error("G'' is singular");
  const double c2 = x[0] + lam.tau * x[1];
  if (!(c2 > 0.0)) throw numerical_error("sound speed squared is not positive: " + std::to_string(c2));
  return {x[0], x[1], std::sqrt(c2)};
}

inline LinearCoefficients linear_coefficients(const PotentialSpec& spec, Lambda lam) {
  return linear_coefficients_from(tilted_moments(spec, lam), lam);
}

struct Rotation {
  Eigen::Matrix3d R, Q;
};

inline Rotation rotation_from(const TiltedMoments& t, const LinearCoefficients& lc, Lambda lam) {
  const double b = lam.beta, tau = lam.tau;
  Rotation out;
  out.R << 1, 0, 0, 0, lc.tau_r, -b * tau, 0, lc.tau_e, b;
  const Eigen::Vector2d dir(tau, -1.0);
  const double d2G = dir.dot(t.hessian * dir);
  out.Q = Eigen::Vector3d(1.0 / b, lc.c * lc.c / b, b * b * d2G).asDiagonal();

  Eigen::Matrix3d sigma = Eigen::Matrix3d::Zero();
  sigma(0, 0) = 1.0 / b;
  sigma.block<2, 2>(1, 1) = t.hessian;
  const double err = (out.R.transpose() * sigma * out.R - out.Q).cwiseAbs().maxCoeff();
  if (!(err <= 1e-8))
    throw numerical_error("rotation identity R^T Sigma R = Q violated by " + std::to_string(err));
  return out;
}

inline Rotation rotation_matrix(const PotentialSpec& spec, Lambda lam) {
  const auto t = tilted_moments(spec, lam);
  return rotation_from(t, linear_coefficients_from(t, lam), lam);
}

// Everything derived from (beta, tau), computed once.
struct CanonicalParams {
  PotentialSpec spec;
  double beta = 1.0, tau = 0.0;
  double G = 0.0;
  double r_bar = 0.0, e_bar = 0.0;
  Eigen::Matrix3d Sigma;
  Eigen::Matrix2d G2;
  double tau_r = 1.0, tau_e = 0.0, c = 1.0;
  Eigen::Matrix3d R, Q;

  Lambda lambda() const { return {beta, tau}; }
  Eigen::Vector3d w_bar() const { return {0.0, r_bar, e_bar}; }
  // d^2 G / d beta^2 at fixed tau
  double d2G_beta() const { return Q(2, 2) / (beta * beta); }
};

inline CanonicalParams make_canonical(const PotentialSpec& spec, double beta, double tau) {
  const Lambda lam{beta, tau};
  lam.validate();
  const auto t = tilted_moments(spec, lam);
  const auto lc = linear_coefficients_from(t, lam);
  const auto rot = rotation_from(t, lc, lam);
  CanonicalParams cp;
  cp.spec = spec;
  cp.beta = beta;
  cp.tau = tau;
  cp.G = t.G;
  cp.r_bar = t.r_mean;
  cp.e_bar = t.e_mean;
  cp.G2 = t.hessian;
  cp.Sigma.setZero();
  cp.Sigma(0, 0) = 1.0 / beta;
  cp.Sigma.block<2, 2>(1, 1) = t.hessian;
  cp.tau_r = lc.tau_r;
  cp.tau_e = lc.tau_e;
  cp.c = lc.c;
  cp.R = rot.R;
  cp.Q = rot.Q;
  return cp;
}

}  // namespace ochain

#endif
