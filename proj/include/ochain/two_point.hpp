#ifndef OCHAIN_TWO_POINT_HPP
#define OCHAIN_TWO_POINT_HPP

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>

#include "error.hpp"
#include "potential.hpp"

namespace ochain {

struct Site {
  double p = 0.0, r = 0.0;
};

// (p, r) bond means, internal energy E and angle theta in [0, 2 pi).
//   sqrt(E) cos(theta) = (p1 - p2) / (2 sqrt 2)
//   sqrt(E) sin(theta) = sgn(r1 - r2) sqrt(g),  g = (V(r1) + V(r2))/2 - V(r)
struct TwoPointCoords {
  double p = 0.0, r = 0.0, E = 0.0, theta = 0.0;
};

struct JacobianBounds {
  double lower, upper;
};

inline JacobianBounds jacobian_bounds(const PotentialSpec& spec) {
  const auto b = curvature_bounds(spec);
  return {std::sqrt(b.lower) / (std::sqrt(2.0) * b.upper),
          std::sqrt(b.upper) / (std::sqrt(2.0) * b.lower)};
}

namespace detail {

inline double wrap_angle(double t) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  t = std::fmod(t, two_pi);
  if (t < 0.0) t += two_pi;
  if (t >= two_pi) t = 0.0;
  return t;
}

// |v| >= 0 with bond_gap(r, v) = target; g is even, convex and increasing in |v|,
// with d- v^2/8 <= g <= d+ v^2/8. Halley steps inside a shrinking bracket.
inline double separation_for_gap(const PotentialSpec& spec, double r, double target) {
  if (!(target > 0.0)) return 0.0;
  if (spec.anh() == 0.0) return std::sqrt(8.0 * target);
  const auto b = curvature_bounds(spec);
  double lo = std::sqrt(8.0 * target / b.upper), hi = std::sqrt(8.0 * target / b.lower);
  double v = std::clamp(std::sqrt(8.0 * target / spec.d2V(r)), lo, hi);
  for (int it = 0; it < 100; ++it) {
    const auto t = spec.bond_terms(r, v);
    const double f = t.g - target;
    if (f > 0.0) hi = v; else if (f < 0.0) lo = v; else return v;
    const double newton = f / t.g1;
    double next = v - newton / (1.0 - 0.5 * newton * t.g2 / t.g1);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - v) <= 2e-16 * v || hi - lo <= 4e-16 * hi) return next;
    v = next;
  }
  return v;
}

}  // namespace detail

inline TwoPointCoords to_circle(const PotentialSpec& spec, Site x1, Site x2) {
  TwoPointCoords c;
  c.p = 0.5 * (x1.p + x2.p);
  c.r = 0.5 * (x1.r + x2.r);
  const double u = x1.p - x2.p, v = x1.r - x2.r;
  const double X = u / (2.0 * std::numbers::sqrt2);
  const double Z = std::copysign(std::sqrt(spec.bond_gap(c.r, v)), v);
  c.E = X * X + Z * Z;
  c.theta = c.E > 0.0 ? detail::wrap_angle(std::atan2(Z, X)) : 0.0;
  return c;
}

inline std::pair<Site, Site> from_circle(const PotentialSpec& spec, const TwoPointCoords& c) {
  if (!(c.E >= 0.0)) throw domain_error("from_circle needs E >= 0");
  const double s = std::sqrt(c.E);
  const double X = s * std::cos(c.theta), Z = s * std::sin(c.theta);
  const double half_u = std::numbers::sqrt2 * X;
  const double half_v = 0.5 * std::copysign(detail::separation_for_gap(spec, c.r, Z * Z), Z);
  return {Site{c.p + half_u, c.r + half_v}, Site{c.p - half_u, c.r - half_v}};
}

// J = sqrt2 sqrt(V(r1) + V(r2) - 2V(r)) / |V'(r1) - V'(r2)| at separation v = r1 - r2,
// with its limit 1/sqrt(2 V''(r)) at v = 0.
inline double jacobian_at_separation(const PotentialSpec& spec, double r, double v) {
  if (std::abs(v) < 1e-150) return 1.0 / std::sqrt(2.0 * spec.d2V(r));
  const auto t = spec.bond_terms(r, v);
  return std::sqrt(t.g) / (2.0 * std::abs(t.g1));
}

inline double jacobian(const PotentialSpec& spec, const TwoPointCoords& c) {
  const double s = std::sin(c.theta);
  const double v = std::copysign(detail::separation_for_gap(spec, c.r, c.E * s * s), s);
  const double j = jacobian_at_separation(spec, c.r, v);
  const auto b = jacobian_bounds(spec);
  if (!(j >= b.lower * (1 - 1e-12) && j <= b.upper * (1 + 1e-12)))
    throw numerical_error("Jacobian " + std::to_string(j) + " outside its analytic bounds");
  return j;
}

// The circle through a fixed (p, r, E): evaluates J and dJ/dtheta along it.
class BondCircle {
 public:
  BondCircle(const PotentialSpec& spec, double r, double E) : spec_(spec), r_(r), E_(E) {}

  double separation(double theta) const {
    const double s = std::sin(theta);
    return std::copysign(detail::separation_for_gap(spec_, r_, E_ * s * s), s);
  }

  struct Value {
    double J, dJ;
  };

  Value at(double theta) const { return at(theta, separation(theta)); }

  // v must be the separation belonging to theta
  Value at(double theta, double v) const {
    if (spec_.anh() == 0.0) return {1.0 / std::numbers::sqrt2, 0.0};
    return evaluate(spec_, r_, E_, theta, v, spec_.bond_terms(r_, v));
  }

  static Value evaluate(const PotentialSpec& spec, double r, double E, double theta, double v,
                        const PotentialSpec::BondTerms& t) {
    if (spec.anh() == 0.0) return {1.0 / std::numbers::sqrt2, 0.0};
    // J is even in v, so dJ/dtheta vanishes where r1 = r2
    if (std::abs(v) < 1e-150) return {1.0 / std::sqrt(2.0 * spec.d2V(r)), 0.0};
    const double J = std::sqrt(t.g) / (2.0 * std::abs(t.g1));
    // J(v) = sqrt(g) / (2|g'|); its v-derivative cancels to O(v) near v = 0,
    // where J = j0 (1 - c2 v^2 + ...) is used instead
    double dJdv;
    if (std::abs(v) < 1e-4) {
      const double d2 = spec.d2V(r), d4 = spec.d4V(r);
      const double c2 = 1.5 * (d4 / 384.0) / (d2 / 8.0);
      dJdv = -2.0 * c2 * v / std::sqrt(2.0 * d2);
    } else {
      dJdv = std::copysign(1.0, v) / (4.0 * std::sqrt(t.g)) * (1.0 - 2.0 * t.g * t.g2 / (t.g1 * t.g1));
    }
    // g(v(theta)) = E sin^2 theta
    const double dvdt = 2.0 * E * std::sin(theta) * std::cos(theta) / t.g1;
    return {J, dJdv * dvdt};
  }

 private:
  PotentialSpec spec_;
  double r_, E_;
};

}  // namespace ochain

#endif
