#ifndef OCHAIN_POTENTIAL_HPP
#define OCHAIN_POTENTIAL_HPP

#include <cmath>
#include <string>

#include "error.hpp"

namespace ochain {

enum class PotentialKind { harmonic, softened_quadratic };

inline std::string to_string(PotentialKind k) {
  return k == PotentialKind::harmonic ? "harmonic" : "softened-quadratic";
}

inline PotentialKind parse_potential_kind(const std::string& s) {
  if (s == "harmonic") return PotentialKind::harmonic;
  if (s == "softened-quadratic") return PotentialKind::softened_quadratic;
  throw domain_error("unknown potential kind '" + s + "'");
}

// V(r) = r^2/2                          (harmonic)
// V(r) = r^2/2 + a (sqrt(1+r^2) - 1)    (softened-quadratic)
// Both satisfy V(0) = V'(0) = 0 and V >= 0 without any shift.
struct PotentialSpec {
  PotentialKind kind = PotentialKind::harmonic;
  double a = 0.0;

  static PotentialSpec harmonic() { return {PotentialKind::harmonic, 0.0}; }
  static PotentialSpec softened(double a) {
    PotentialSpec s{PotentialKind::softened_quadratic, a};
    s.validate();
    return s;
  }

  void validate() const {
    if (kind == PotentialKind::softened_quadratic && !(std::isfinite(a) && a > -1.0))
      throw domain_error("softened-quadratic potential is not convex for a = " +
                         std::to_string(a) + " (need a > -1)");
  }

  double anh() const { return kind == PotentialKind::harmonic ? 0.0 : a; }

  double V(double r) const {
    const double f = std::sqrt(1.0 + r * r);
    return 0.5 * r * r + anh() * (r * r / (f + 1.0));
  }
  double dV(double r) const { return r + anh() * r / std::sqrt(1.0 + r * r); }
  double d2V(double r) const {
    const double f = std::sqrt(1.0 + r * r);
    return 1.0 + anh() / (f * f * f);
  }
  double d3V(double r) const {
    const double f2 = 1.0 + r * r;
    return -3.0 * anh() * r / (f2 * f2 * std::sqrt(f2));
  }
  double d4V(double r) const {
    const double f2 = 1.0 + r * r;
    return anh() * (12.0 * r * r - 3.0) / (f2 * f2 * f2 * std::sqrt(f2));
  }

  // g(v) = (V(r + v/2) + V(r - v/2))/2 - V(r), free of cancellation for small v.
  double bond_gap(double r, double v) const {
    const double h = 0.5 * v;
    double g = 0.5 * h * h;
    if (anh() != 0.0) {
      const double x1 = r + h, x2 = r - h;
      const double f1 = std::sqrt(1.0 + x1 * x1), f2 = std::sqrt(1.0 + x2 * x2);
      const double f = std::sqrt(1.0 + r * r);
      const double second = 8.0 * h * h / ((f1 * f2 + 1.0 + x1 * x2) * (f1 + f2 + 2.0 * f));
      g += 0.5 * anh() * second;
    }
    return g;
  }

  // V'(r + v/2) - V'(r - v/2)
  double bond_force_diff(double r, double v) const {
    const double h = 0.5 * v;
    double d = 2.0 * h;
    if (anh() != 0.0) {
      const double x1 = r + h, x2 = r - h;
      const double f1 = std::sqrt(1.0 + x1 * x1), f2 = std::sqrt(1.0 + x2 * x2);
      const double p = x1 * x2;
      const double m = p <= 0.0 ? f1 * f2 - p : (1.0 + x1 * x1 + x2 * x2) / (f1 * f2 + p);
      d += anh() * h * (2.0 + 2.0 * m) / ((f1 + f2) * f1 * f2);
    }
    return d;
  }

  // g, dg/dv and d2g/dv2 together, sharing the square roots.
  struct BondTerms {
    double g, g1, g2;
  };
  BondTerms bond_terms(double r, double v) const {
    const double h = 0.5 * v;
    BondTerms t{0.5 * h * h, 0.5 * h, 0.25};
    if (anh() != 0.0) {
      const double x1 = r + h, x2 = r - h;
      const double q1 = 1.0 + x1 * x1, q2 = 1.0 + x2 * x2;
      const double f1 = std::sqrt(q1), f2 = std::sqrt(q2), f = std::sqrt(1.0 + r * r);
      const double p = x1 * x2;
      const double f12 = f1 * f2;
      t.g += 4.0 * anh() * h * h / ((f12 + 1.0 + p) * (f1 + f2 + 2.0 * f));
      const double m = p <= 0.0 ? f12 - p : (q1 + x2 * x2) / (f12 + p);
      t.g1 += 0.25 * anh() * h * (2.0 + 2.0 * m) / ((f1 + f2) * f12);
      t.g2 += 0.125 * anh() * (1.0 / (q1 * f1) + 1.0 / (q2 * f2));
    }
    return t;
  }

  // V(alpha + d) + k V(alpha) - (k+1) V(alpha + d/(k+1)) >= 0
  double split_gap(double alpha, double d, int k) const {
    const double k1 = k + 1.0;
    double s = 0.5 * d * d * k / k1;
    if (anh() != 0.0) {
      const double fa = std::sqrt(1.0 + alpha * alpha);
      auto slope = [&](double y) { return (y + alpha) / (std::sqrt(1.0 + y * y) + fa); };
      s += anh() * d * (slope(alpha + d) - slope(alpha + d / k1));
    }
    return s;
  }
};

struct PotentialValue {
  double V, dV, d2V;
};

inline PotentialValue eval(const PotentialSpec& spec, double r) {
  return {spec.V(r), spec.dV(r), spec.d2V(r)};
}

struct CurvatureBounds {
  double lower, upper;
};

// V''(r) = 1 + a (1+r^2)^{-3/2} sweeps monotonically from 1 + a (r = 0) to 1 (|r| -> inf).
inline CurvatureBounds curvature_bounds(const PotentialSpec& spec) {
  spec.validate();
  const double a = spec.anh();
  return a >= 0.0 ? CurvatureBounds{1.0, 1.0 + a} : CurvatureBounds{1.0 + a, 1.0};
}

inline bool check_gap_assumption(const PotentialSpec& spec, double delta) {
  if (!(delta > 0.0)) throw domain_error("check_gap_assumption needs delta > 0");
  const auto b = curvature_bounds(spec);
  return b.upper < (1.0 + delta) * b.lower;
}

}  // namespace ochain

#endif
