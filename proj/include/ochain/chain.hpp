#ifndef OCHAIN_CHAIN_HPP
#define OCHAIN_CHAIN_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "potential.hpp"
#include "rng.hpp"
#include "thermo.hpp"
#include "two_point.hpp"

namespace ochain {

enum class Boundary { wall_tension, periodic };
enum class Integrator { strang_circle, direct_em };

inline std::string to_string(Boundary b) { return b == Boundary::periodic ? "periodic" : "wall-tension"; }
inline std::string to_string(Integrator i) { return i == Integrator::direct_em ? "direct-em" : "strang-circle"; }

inline Boundary parse_boundary(const std::string& s) {
  if (s == "wall-tension") return Boundary::wall_tension;
  if (s == "periodic") return Boundary::periodic;
  throw domain_error("unknown boundary '" + s + "'");
}
inline Integrator parse_integrator(const std::string& s) {
  if (s == "strang-circle") return Integrator::strang_circle;
  if (s == "direct-em") return Integrator::direct_em;
  throw domain_error("unknown integrator '" + s + "'");
}

// Sites are 0-based here: p[i], r[i] for i = 0..N-1 hold p_{i+1}, r_{i+1}.
// In wall-tension mode the virtual p_0 = 0 is implied and the last site feels tau.
struct ChainState {
  std::vector<double> p, r;
  Boundary boundary = Boundary::wall_tension;
  double tau = 0.0;
  double t_macro = 0.0;
  std::uint64_t substeps = 0;

  std::size_t size() const { return p.size(); }
  std::size_t bonds() const { return boundary == Boundary::periodic ? size() : size() - 1; }
  double energy(const PotentialSpec& spec, std::size_t i) const {
    return 0.5 * p[i] * p[i] + spec.V(r[i]);
  }
};

struct SimConfig {
  double gamma = 1.0;
  double dt_macro = 0.01;
  std::optional<double> h_micro;
  Integrator integrator = Integrator::strang_circle;
  std::uint64_t seed = 1;
  std::size_t replicas = 1;
  bool drift = true;
  bool noise = true;

  static double default_h(const PotentialSpec& spec, std::size_t N, double gamma) {
    const double dp = curvature_bounds(spec).upper;
    return 0.05 / (N * std::sqrt(dp) * std::max(1.0, gamma));
  }
  static double stability_limit(const PotentialSpec& spec, std::size_t N, double gamma) {
    const double dp = curvature_bounds(spec).upper;
    return 0.1 / (N * std::max(std::sqrt(dp), gamma * dp));
  }
  double step(const PotentialSpec& spec, std::size_t N) const {
    return h_micro ? *h_micro : default_h(spec, N, gamma);
  }

  void validate(const PotentialSpec& spec, std::size_t N) const {
    std::ostringstream os;
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) os << "gamma must be >= 0; ";
    if (!(dt_macro > 0.0)) os << "dt_macro must be > 0; ";
    const double h = step(spec, N);
    if (!(h > 0.0)) os << "h_micro must be > 0; ";
    if (h > dt_macro * (1 + 1e-12)) os << "h_micro exceeds dt_macro; ";
    if (h > stability_limit(spec, N, gamma) * (1 + 1e-12))
      os << "h_micro = " << h << " exceeds the stability bound " << stability_limit(spec, N, gamma) << "; ";
    if (replicas == 0) os << "replicas must be >= 1; ";
    if (!os.str().empty()) throw config_error(os.str());
  }
};

inline void validate_chain(std::size_t N, Boundary b, Integrator in) {
  if (N < 2) throw domain_error("chain needs N >= 2");
  if (b == Boundary::periodic && in == Integrator::strang_circle && N % 2 != 0)
    throw domain_error("periodic strang-circle sweeps need an even N");
}

// Draws r from exp(-beta V(r) + beta tau r) by rejection against the Gaussian envelope
// centred at the mode m; concavity of the exponent gives the bound
// -beta (V(r) - V(m)) + beta tau (r - m) <= -beta d- (r - m)^2 / 2.
class StretchSampler {
 public:
  StretchSampler(const PotentialSpec& spec, Lambda lam)
      : spec_(spec), lam_(lam), m_(detail::tilted_mode(spec, lam.tau)), vm_(spec.V(m_)),
        dmin_(curvature_bounds(spec).lower), env_(m_, 1.0 / std::sqrt(lam.beta * dmin_)) {}

  double operator()(Rng& rng) {
    for (int tries = 0; tries < 100000; ++tries) {
      const double r = env_(rng);
      const double d = r - m_;
      const double logacc =
          -lam_.beta * (spec_.V(r) - vm_) + lam_.beta * lam_.tau * d + 0.5 * lam_.beta * dmin_ * d * d;
      if (logacc > 1e-10)
        throw numerical_error("rejection envelope violated at r = " + std::to_string(r) +
                              " (log ratio " + std::to_string(logacc) + ")");
      if (unif_(rng) < std::exp(logacc)) return r;
    }
    throw numerical_error("rejection sampler made no progress");
  }

 private:
  PotentialSpec spec_;
  Lambda lam_;
  double m_, vm_, dmin_;
  std::normal_distribution<double> env_;
  std::uniform_real_distribution<double> unif_{0.0, 1.0};
};

inline ChainState sample_equilibrium(const PotentialSpec& spec, Lambda lam, std::size_t N,
                                     Boundary boundary, Rng& rng) {
  lam.validate();
  if (N < 2) throw domain_error("chain needs N >= 2");
  ChainState s;
  s.boundary = boundary;
  s.tau = lam.tau;
  s.p.resize(N);
  s.r.resize(N);
  std::normal_distribution<double> mom(0.0, 1.0 / std::sqrt(lam.beta));
  StretchSampler st(spec, lam);
  for (std::size_t i = 0; i < N; ++i) {
    s.p[i] = mom(rng);
    s.r[i] = st(rng);
  }
  return s;
}

namespace detail {

inline void kick(const PotentialSpec& spec, ChainState& s, double dt) {
  const std::size_t n = s.size();
  double fprev = spec.dV(s.r[0]);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double fnext = spec.dV(s.r[i + 1]);
    s.p[i] += dt * (fnext - fprev);
    fprev = fnext;
  }
  const double last = s.boundary == Boundary::periodic ? spec.dV(s.r[0]) : s.tau;
  s.p[n - 1] += dt * (last - fprev);
}

inline void drift_positions(ChainState& s, double dt) {
  const std::size_t n = s.size();
  for (std::size_t i = n - 1; i > 0; --i) s.r[i] += dt * (s.p[i] - s.p[i - 1]);
  const double p0 = s.boundary == Boundary::periodic ? s.p[n - 1] : 0.0;
  s.r[0] += dt * (s.p[0] - p0);
}

}  // namespace detail

// Velocity Verlet for the drift N A_N over a macroscopic time h (negative h inverts it).
inline void hamiltonian_substep(const PotentialSpec& spec, ChainState& s, double h) {
  const double n = static_cast<double>(s.size());
  detail::kick(spec, s, 0.5 * h * n);
  detail::drift_positions(s, h * n);
  detail::kick(spec, s, 0.5 * h * n);
}

namespace detail {

// Circle step for one bond: dtheta = J^-1 d(J^-1)/dtheta dt + sqrt2 J^-1 dB, i.e. the
// generator (1/2) Y^2 of the bond vector field Y = sqrt2 J^-1 d/dtheta.
inline void circle_bond_step(const PotentialSpec& spec, ChainState& s, std::size_t i, std::size_t j,
                             double dt, double xi) {
  const double u = s.p[i] - s.p[j], v = s.r[i] - s.r[j];
  TwoPointCoords c{0.5 * (s.p[i] + s.p[j]), 0.5 * (s.r[i] + s.r[j]), 0.0, 0.0};
  const auto t = spec.bond_terms(c.r, v);
  const double X = u / (2.0 * std::numbers::sqrt2);
  const double Z = std::copysign(std::sqrt(t.g), v);
  c.E = X * X + Z * Z;
  // a blown-up state is left alone for the instability check in advance()
  if (c.E == 0.0 || !std::isfinite(c.E)) return;
  c.theta = std::atan2(Z, X);
  const auto val = BondCircle::evaluate(spec, c.r, c.E, c.theta, v, t);
  const double ji = 1.0 / val.J;
  c.theta = wrap_angle(c.theta - ji * ji * ji * val.dJ * dt + std::numbers::sqrt2 * ji * std::sqrt(dt) * xi);
  const auto [x, y] = from_circle(spec, c);
  s.p[i] = x.p;
  s.r[i] = x.r;
  s.p[j] = y.p;
  s.r[j] = y.r;
}

template <class Normals>
void circle_sweep(const PotentialSpec& spec, ChainState& s, double dt, std::size_t parity, Normals& normal) {
  const std::size_t n = s.size(), nb = s.bonds();
  for (std::size_t b = parity; b < nb; b += 2) circle_bond_step(spec, s, b, (b + 1) % n, dt, normal(s.substeps, b));
}

}  // namespace detail

// Noise over a macroscopic time h with strength gamma (time dilation gamma N h).
template <class Normals>
void noise_substep(const PotentialSpec& spec, ChainState& s, double h, double gamma, Integrator in,
                   Normals& normal) {
  const std::size_t n = s.size(), nb = s.bonds();
  const double rate = gamma * static_cast<double>(n);
  if (rate == 0.0) return;
  if (in == Integrator::strang_circle) {
    const std::size_t first = s.substeps % 2;
    detail::circle_sweep(spec, s, rate * h, first, normal);
    detail::circle_sweep(spec, s, rate * h, 1 - first, normal);
    return;
  }
  // Euler-Maruyama on the current-increment rows, all bonds from the same state
  std::vector<double> jp(nb), jr(nb);
  const double sq = std::sqrt(rate * h);
  for (std::size_t b = 0; b < nb; ++b) {
    const std::size_t i = b, j = (b + 1) % n;
    const double dvp = spec.dV(s.r[j]) - spec.dV(s.r[i]);
    const double dp = s.p[j] - s.p[i];
    const double xi = normal(s.substeps, b);
    jp[b] = 0.5 * rate * (spec.d2V(s.r[i]) + spec.d2V(s.r[j])) * dp * h + sq * dvp * xi;
    jr[b] = rate * dvp * h - sq * dp * xi;
  }
  for (std::size_t b = 0; b < nb; ++b) {
    const std::size_t i = b, j = (b + 1) % n;
    s.p[i] += jp[b];
    s.p[j] -= jp[b];
    s.r[i] += jr[b];
    s.r[j] -= jr[b];
  }
}

template <class Normals>
void strang_step(const PotentialSpec& spec, ChainState& s, const SimConfig& cfg, double h, Normals& normal) {
  if (cfg.drift) hamiltonian_substep(spec, s, 0.5 * h);
  if (cfg.noise) noise_substep(spec, s, h, cfg.gamma, cfg.integrator, normal);
  if (cfg.drift) hamiltonian_substep(spec, s, 0.5 * h);
  ++s.substeps;
}

inline std::size_t substeps_for(const PotentialSpec& spec, const ChainState& s, const SimConfig& cfg, double dt) {
  const double h = cfg.step(spec, s.size());
  return static_cast<std::size_t>(std::max(1.0, std::ceil(dt / h - 1e-9)));
}

template <class Normals>
void advance(const PotentialSpec& spec, ChainState& s, const SimConfig& cfg, double dt_macro, Normals& normal) {
  const std::size_t k = substeps_for(spec, s, cfg, dt_macro);
  const double h = dt_macro / static_cast<double>(k);
  const double t0 = s.t_macro;
  for (std::size_t i = 0; i < k; ++i) strang_step(spec, s, cfg, h, normal);
  double worst = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) worst = std::max({worst, std::abs(s.p[i]), std::abs(s.r[i])});
  if (!(worst <= 1e6)) {
    std::ostringstream os;
    os << "chain unstable in (" << t0 << ", " << t0 + dt_macro << "]: max |p|,|r| = " << worst;
    throw instability_error(os.str(), t0);
  }
  s.t_macro = t0 + dt_macro;
}

inline void advance(const PotentialSpec& spec, ChainState& s, const SimConfig& cfg, double dt_macro, Rng& rng) {
  NormalStream ns(rng);
  advance(spec, s, cfg, dt_macro, ns);
}

struct Totals {
  double p, r, e;
};

inline Totals conserved_totals(const PotentialSpec& spec, const ChainState& s) {
  Totals t{0, 0, 0};
  for (std::size_t i = 0; i < s.size(); ++i) {
    t.p += s.p[i];
    t.r += s.r[i];
    t.e += s.energy(spec, i);
  }
  return t;
}

// H_N - tau sum r, conserved by the wall-tension drift.
inline double drift_invariant(const PotentialSpec& spec, const ChainState& s) {
  const auto t = conserved_totals(spec, s);
  return s.boundary == Boundary::periodic ? t.e : t.e - s.tau * t.r;
}

}  // namespace ochain

#endif
