#ifndef OCHAIN_TEST_SUPPORT_HPP
#define OCHAIN_TEST_SUPPORT_HPP

// Small estimators and independent oracles shared by the test binaries.

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <cstdint>
#include <functional>
#include <unsupported/Eigen/MatrixFunctions>
#include <vector>

#include "ochain/potential.hpp"

namespace testsupport {

struct MeanSe {
  double mean = 0.0, se = 0.0;
};

inline MeanSe mean_se(const std::vector<double>& x) {
  const double n = static_cast<double>(x.size());
  double m = 0.0;
  for (double v : x) m += v;
  m /= n;
  double s2 = 0.0;
  for (double v : x) s2 += (v - m) * (v - m);
  return {m, std::sqrt(s2 / (n - 1.0) / n)};
}

// Welford accumulator
class Running {
 public:
  void add(double x) {
    ++n_;
    const double d = x - m_;
    m_ += d / static_cast<double>(n_);
    s_ += d * (x - m_);
  }
  double mean() const { return m_; }
  double var() const { return n_ > 1 ? s_ / static_cast<double>(n_ - 1) : 0.0; }
  double se() const { return std::sqrt(var() / static_cast<double>(n_)); }
  std::uint64_t count() const { return n_; }

 private:
  std::uint64_t n_ = 0;
  double m_ = 0.0, s_ = 0.0;
};

// Moments E[f(r)] of the tilted single-site law exp(-beta V + beta tau r), by a
// plain quadrature written independently of the library: window [-L, L] around 0.
inline double tilted_expectation(const ochain::PotentialSpec& spec, double beta, double tau,
                                 const std::function<double(double)>& f, double L = 40.0) {
  using boost::math::quadrature::gauss_kronrod;
  // shift by the value at the maximising grid point to avoid overflow
  double shift = -1e300;
  for (double r = -L; r <= L; r += 1e-3) shift = std::max(shift, -beta * spec.V(r) + beta * tau * r);
  auto w = [&](double r) { return std::exp(-beta * spec.V(r) + beta * tau * r - shift); };
  const double z = gauss_kronrod<double, 61>::integrate(w, -L, L, 15, 1e-14);
  const double num = gauss_kronrod<double, 61>::integrate([&](double r) { return f(r) * w(r); }, -L, L, 15, 1e-14);
  return num / z;
}

// Covariance of (p, r, e) under the single-site law, from the quadrature above:
// p is an independent N(0, 1/beta) and e = p^2/2 + V(r).
inline Eigen::Matrix3d sigma_oracle(const ochain::PotentialSpec& spec, double beta, double tau) {
  auto E = [&](auto f) { return tilted_expectation(spec, beta, tau, f); };
  const double mr = E([](double r) { return r; });
  const double mv = E([&](double r) { return spec.V(r); });
  Eigen::Matrix3d S = Eigen::Matrix3d::Zero();
  S(0, 0) = 1.0 / beta;
  S(1, 1) = E([&](double r) { return (r - mr) * (r - mr); });
  S(1, 2) = S(2, 1) = E([&](double r) { return (r - mr) * (spec.V(r) - mv); });
  S(2, 2) = 0.5 / (beta * beta) + E([&](double r) { return (spec.V(r) - mv) * (spec.V(r) - mv); });
  return S;
}

// exp(t M) for the affine system x' = A x + b, via the augmented matrix [[A, b], [0, 0]].
inline Eigen::VectorXd affine_flow(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& x0,
                                   double t) {
  const auto n = A.rows();
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n + 1, n + 1);
  M.topLeftCorner(n, n) = A;
  M.topRightCorner(n, 1) = b;
  Eigen::MatrixXd E = (t * M).exp();
  Eigen::VectorXd y(n + 1);
  y << x0, 1.0;
  return (E * y).head(n);
}

}  // namespace testsupport

#endif
