#ifndef OCHAIN_MICROCANONICAL_HPP
#define OCHAIN_MICROCANONICAL_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "chain.hpp"
#include "error.hpp"
#include "parallel.hpp"
#include "potential.hpp"
#include "rng.hpp"
#include "stats.hpp"
#include "thermo.hpp"
#include "two_point.hpp"

namespace ochain {

// K sites constrained to mean conserved vector w = (p, r, e).
struct MicrostateK {
  std::vector<Site> x;
  Eigen::Vector3d w = Eigen::Vector3d::Zero();

  std::size_t size() const { return x.size(); }

  Eigen::Vector3d means(const PotentialSpec& spec) const {
    Eigen::Vector3d m = Eigen::Vector3d::Zero();
    for (const auto& s : x) m += Eigen::Vector3d(s.p, s.r, 0.5 * s.p * s.p + spec.V(s.r));
    return m / static_cast<double>(x.size());
  }

  double constraint_error(const PotentialSpec& spec) const { return (means(spec) - w).cwiseAbs().maxCoeff(); }
};

inline double internal_energy(const PotentialSpec& spec, const Eigen::Vector3d& w) {
  return w[2] - 0.5 * w[0] * w[0] - spec.V(w[1]);
}

// All sites at (p, r) except sites 1 and 2, whose momenta are split by +-sqrt(K U).
inline MicrostateK feasible_microstate(const PotentialSpec& spec, const Eigen::Vector3d& w, std::size_t K) {
  if (K < 2) throw domain_error("microcanonical manifold needs K >= 2");
  const double U = internal_energy(spec, w);
  if (!(U > 0.0))
    throw domain_error("infeasible w: need e > p^2/2 + V(r), got internal energy " + std::to_string(U));
  MicrostateK m;
  m.w = w;
  m.x.assign(K, Site{w[0], w[1]});
  const double d = std::sqrt(static_cast<double>(K) * U);
  m.x[0].p += d;
  m.x[1].p -= d;
  return m;
}

enum class PairSelection { nearest, all_pairs };

// Heat-bath MCMC on Omega_{w,K}: choose a pair, redraw its circle angle from the
// density J(theta) / int J by rejection under the uniform envelope J_max.
class MicroSampler {
 public:
  MicroSampler(const PotentialSpec& spec, MicrostateK state, Rng rng, PairSelection sel = PairSelection::nearest)
      : spec_(spec), s_(std::move(state)), rng_(std::move(rng)), sel_(sel), jmax_(jacobian_bounds(spec).upper) {
    if (s_.size() < 2) throw domain_error("microcanonical sampler needs K >= 2");
  }

  const MicrostateK& state() const { return s_; }
  MicrostateK& state() { return s_; }
  std::uint64_t proposals() const { return proposals_; }

  void update_pair(std::size_t i, std::size_t j) {
    auto c = to_circle(spec_, s_.x[i], s_.x[j]);
    if (c.E == 0.0) return;
    const BondCircle circle(spec_, c.r, c.E);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi), u(0.0, 1.0);
    for (int tries = 0; tries < 100000; ++tries) {
      ++proposals_;
      const double th = angle(rng_);
      const double jac = circle.at(th).J;
      if (jac > jmax_ * (1 + 1e-12))
        throw numerical_error("Jacobian " + std::to_string(jac) + " above its envelope " + std::to_string(jmax_));
      if (u(rng_) * jmax_ < jac) {
        c.theta = th;
        const auto [a, b] = from_circle(spec_, c);
        s_.x[i] = a;
        s_.x[j] = b;
        return;
      }
    }
    throw numerical_error("circle rejection sampler made no progress");
  }

  void update() {
    const std::size_t K = s_.size();
    if (sel_ == PairSelection::nearest) {
      std::uniform_int_distribution<std::size_t> pick(0, K - 2);
      const std::size_t k = pick(rng_);
      update_pair(k, k + 1);
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, K - 1);
      const std::size_t i = pick(rng_);
      std::size_t j = pick(rng_);
      while (j == i) j = pick(rng_);
      update_pair(i, j);
    }
  }

  // K updates
  void sweep() {
    for (std::size_t k = 0; k < s_.size(); ++k) update();
  }

 private:
  PotentialSpec spec_;
  MicrostateK s_;
  Rng rng_;
  PairSelection sel_;
  double jmax_;
  std::uint64_t proposals_ = 0;
};

// The bijection tau_K on the r-coordinates (momenta are untouched): zeta, then zeta_*.
//   alpha_k = mean of r_1..r_k
//   r'_k = sgn(r_{k+1} - alpha_k) sqrt(2k/(k+1) (V(r_{k+1}) + k V(alpha_k) - (k+1) V(alpha_{k+1}))), k < K
//   r'_K = alpha_K
inline std::vector<double> zeta(const PotentialSpec& spec, const std::vector<double>& r) {
  const std::size_t K = r.size();
  std::vector<double> out(K);
  double alpha = r[0];
  for (std::size_t k = 1; k < K; ++k) {
    const double d = r[k] - alpha;
    const double gap = std::max(0.0, spec.split_gap(alpha, d, static_cast<int>(k)));
    out[k - 1] = std::copysign(std::sqrt(2.0 * k / (k + 1.0) * gap), d);
    alpha += d / (k + 1.0);
  }
  out[K - 1] = alpha;
  return out;
}

inline std::vector<double> zeta_star(const std::vector<double>& rp) {
  const std::size_t K = rp.size();
  // tail[k] = sum_{i=k}^{K-1} r'_i / i  (1-based i)
  std::vector<double> tail(K + 1, 0.0);
  for (std::size_t i = K - 1; i >= 1; --i) tail[i] = tail[i + 1] + rp[i - 1] / static_cast<double>(i);
  std::vector<double> out(K);
  out[0] = rp[K - 1] - tail[1];
  for (std::size_t k = 2; k <= K - 1; ++k) out[k - 1] = rp[K - 1] + rp[k - 2] - tail[k];
  out[K - 1] = rp[K - 1] + rp[K - 2];
  return out;
}

inline std::vector<double> tau_K_r(const PotentialSpec& spec, const std::vector<double>& r) {
  if (r.size() < 3) throw domain_error("tau_K needs K >= 3");
  return zeta_star(zeta(spec, r));
}

inline std::vector<Site> tau_K(const PotentialSpec& spec, const std::vector<Site>& x) {
  std::vector<double> r(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) r[k] = x[k].r;
  const auto rr = tau_K_r(spec, r);
  std::vector<Site> out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = {x[k].p, rr[k]};
  return out;
}

// Radius of the Kac sphere S_K(a, R) containing tau_K(Omega_{w,K}).
inline double kac_radius(const PotentialSpec& spec, const Eigen::Vector3d& w) {
  return 2.0 * w[2] - 2.0 * spec.V(w[1]) + w[1] * w[1];
}

struct DeterminantCheck {
  double det = 0.0;         // central differences at h
  double det_coarse = 0.0;  // same at 10 h
  double richardson_rel = 0.0;
  double lower = 0.0, upper = 0.0;  // c-^{K-1}, c+^{K-1}
  bool within = false;
};

// |det tau_K'| by central differences; the p-block is the identity so only the r-block counts.
inline DeterminantCheck tau_K_determinant(const PotentialSpec& spec, const std::vector<double>& r, double h = 1e-6,
                                          double rel_tol = 1e-6) {
  const std::size_t K = r.size();
  auto jac_det = [&](double step) {
    Eigen::MatrixXd J(K, K);
    for (std::size_t j = 0; j < K; ++j) {
      auto up = r, dn = r;
      up[j] += step;
      dn[j] -= step;
      const auto fu = tau_K_r(spec, up), fd = tau_K_r(spec, dn);
      for (std::size_t i = 0; i < K; ++i) J(i, j) = (fu[i] - fd[i]) / (2.0 * step);
    }
    return std::abs(J.partialPivLu().determinant());
  };
  DeterminantCheck d;
  d.det = jac_det(h);
  d.det_coarse = jac_det(10.0 * h);
  d.richardson_rel = std::abs(d.det - d.det_coarse) / d.det;
  const auto b = curvature_bounds(spec);
  const double cm = b.lower / std::sqrt(b.upper), cp = b.upper / std::sqrt(b.lower);
  d.lower = std::pow(cm, static_cast<double>(K - 1));
  d.upper = std::pow(cp, static_cast<double>(K - 1));
  d.within = d.det >= d.lower * (1 - rel_tol) && d.det <= d.upper * (1 + rel_tol);
  return d;
}

// Circle quantities at the two-site microcanonical point w: mean (p, r) and internal energy E.
inline BondCircle two_point_circle(const PotentialSpec& spec, const Eigen::Vector3d& w) {
  const double E = internal_energy(spec, w);
  if (!(E > 0.0)) throw domain_error("infeasible w: need e > p^2/2 + V(r)");
  return BondCircle(spec, w[1], E);
}

// Gap of -(1/2) Ycal^2 with Ycal = J^-1 d/dtheta on L^2(J dtheta): Fourier-Galerkin on
// {1, cos m theta, sin m theta}_{m <= M} with the generalized eigenproblem
//   A_ij = (1/2) int J^-1 phi_i' phi_j',  B_ij = int J phi_i phi_j.
inline double spectral_gap_two_point(const PotentialSpec& spec, const Eigen::Vector3d& w, int M = 24,
                                     int grid = 2048) {
  const auto circle = two_point_circle(spec, w);
  const int n = 2 * M + 1;
  std::vector<double> J(grid);
  for (int g = 0; g < grid; ++g) J[g] = circle.at(2.0 * std::numbers::pi * g / grid).J;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n), B = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd phi(n), dphi(n);
  const double dt = 2.0 * std::numbers::pi / grid;
  for (int g = 0; g < grid; ++g) {
    const double th = g * dt;
    phi[0] = 1.0;
    dphi[0] = 0.0;
    for (int m = 1; m <= M; ++m) {
      phi[2 * m - 1] = std::cos(m * th);
      dphi[2 * m - 1] = -m * std::sin(m * th);
      phi[2 * m] = std::sin(m * th);
      dphi[2 * m] = m * std::cos(m * th);
    }
    A.noalias() += (0.5 * dt / J[g]) * dphi * dphi.transpose();
    B.noalias() += (dt * J[g]) * phi * phi.transpose();
  }
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(A, B);
  if (es.info() != Eigen::Success) throw numerical_error("two-point eigenproblem did not converge");
  // eigenvalues ascend; the first is the constant mode at 0
  return es.eigenvalues()[1];
}

// Var(cos theta) / E[(Ycal cos theta)^2] under J dtheta / int J, by trapezoid quadrature.
inline double poincare_ratio_cos(const PotentialSpec& spec, const Eigen::Vector3d& w, int grid = 4096) {
  const auto circle = two_point_circle(spec, w);
  double z = 0, m1 = 0, m2 = 0, dir = 0;
  for (int g = 0; g < grid; ++g) {
    const double th = 2.0 * std::numbers::pi * g / grid;
    const double J = circle.at(th).J;
    const double c = std::cos(th), s = std::sin(th);
    z += J;
    m1 += J * c;
    m2 += J * c * c;
    dir += s * s / J;  // (J^-1 d/dtheta cos)^2 J
  }
  const double var = m2 / z - (m1 / z) * (m1 / z);
  return var / (dir / z);
}

struct GapEstimate {
  std::size_t K = 0;
  double lambda = 0.0, se = 0.0;
  std::string method;
  std::string slowest;  // observable that set the estimate
  std::vector<std::pair<std::string, double>> rates;  // fitted rate per basket observable (NaN: no fit)
  bool flagged = false;
  std::string note;
};

struct GapOptions {
  std::size_t chains = 32;
  double sample_dt = 0.0;    // time between recorded samples; 0 picks K^2 / 100
  double h = 0.01;           // integration step of the circle diffusion
  double burn_in = 0.0;      // 0 picks 2 K^2
  double run_time = 0.0;     // per chain; 0 picks 24 K^2
  std::uint64_t seed = 1;
  unsigned workers = default_workers();
};

namespace detail {

// Fits rho(t) ~ exp(-lambda t) by least squares on log rho where 0.1 < rho < 0.7.
inline std::optional<double> decay_rate(const std::vector<double>& rho, double dt) {
  std::vector<double> x, y;
  for (std::size_t l = 1; l < rho.size(); ++l) {
    if (rho[l] <= 0.1) break;
    if (rho[l] < 0.7) {
      x.push_back(l * dt);
      y.push_back(std::log(rho[l]));
    }
  }
  if (x.size() < 3) return std::nullopt;
  return -fit_slope(x, y);
}

}  // namespace detail

// K = 2: the quadrature eigen-solve. K >= 3: the nearest-neighbour circle diffusion with
// generator (1/2) sum_k Ycal_{k,k+1}^2 is run on Omega_{w,K}; the normalized
// autocorrelation of each basket observable is fitted by an exponential and the slowest
// rate is reported, with a standard error from groups of chains.
inline GapEstimate spectral_gap_estimate(const PotentialSpec& spec, const Eigen::Vector3d& w, std::size_t K,
                                         const GapOptions& opt = {}) {
  if (K < 2) throw domain_error("spectral gap needs K >= 2");
  GapEstimate out;
  out.K = K;
  if (K == 2) {
    out.lambda = spectral_gap_two_point(spec, w);
    out.method = "quadrature";
    return out;
  }
  out.method = "diffusion-autocorrelation";
  const double k2 = static_cast<double>(K * K);
  const double burn = opt.burn_in > 0 ? opt.burn_in : 2.0 * k2;
  const double run = opt.run_time > 0 ? opt.run_time : 24.0 * k2;
  const double sdt = opt.sample_dt > 0 ? opt.sample_dt : k2 / 100.0;
  const std::size_t samples = static_cast<std::size_t>(std::ceil(run / sdt));
  const std::size_t max_lag = static_cast<std::size_t>(std::ceil(1.5 * k2 / sdt));
  if (max_lag >= samples) throw domain_error("run too short for the autocorrelation window");

  // basket: p1, r1, e1, p1 p2, cos(theta_12), and the lowest cosine mode of p, r, e
  const std::vector<std::string> names{"p1", "r1", "e1", "p1p2", "cos-theta12", "mode-p", "mode-r", "mode-e"};
  const std::size_t nobs = names.size();
  auto observe = [&](const ChainState& s, std::vector<double>& o) {
    const auto c = to_circle(spec, {s.p[0], s.r[0]}, {s.p[1], s.r[1]});
    o[0] = s.p[0];
    o[1] = s.r[0];
    o[2] = s.energy(spec, 0);
    o[3] = s.p[0] * s.p[1];
    o[4] = std::cos(c.theta);
    o[5] = o[6] = o[7] = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      const double wgt = std::cos(std::numbers::pi * (k + 0.5) / K);
      o[5] += wgt * s.p[k];
      o[6] += wgt * s.r[k];
      o[7] += wgt * s.energy(spec, k);
    }
  };

  // series[chain][obs][t]
  std::vector<std::vector<std::vector<double>>> series(
      opt.chains, std::vector<std::vector<double>>(nobs, std::vector<double>(samples)));
  parallel_for(
      opt.chains,
      [&](std::size_t ch) {
        auto rng = replica_rng(opt.seed, ch, 2);
        const auto m = feasible_microstate(spec, w, K);
        ChainState s;
        s.boundary = Boundary::wall_tension;  // K - 1 bonds, no wrap
        for (const auto& site : m.x) {
          s.p.push_back(site.p);
          s.r.push_back(site.r);
        }
        NormalStream ns(rng);
        // (1/2) Ycal^2 is half the bond generator integrated by the circle step,
        // so a time h of the former is h/2 of the latter: gamma N = 1/2
        const double gamma = 0.5 / static_cast<double>(K);
        auto run_for = [&](double T) {
          const std::size_t n = static_cast<std::size_t>(std::ceil(T / opt.h - 1e-9));
          const double hh = T / static_cast<double>(n);
          for (std::size_t i = 0; i < n; ++i) {
            noise_substep(spec, s, hh, gamma, Integrator::strang_circle, ns);
            ++s.substeps;
          }
        };
        run_for(burn);
        std::vector<double> o(nobs);
        for (std::size_t t = 0; t < samples; ++t) {
          run_for(sdt);
          observe(s, o);
          for (std::size_t q = 0; q < nobs; ++q) series[ch][q][t] = o[q];
        }
      },
      opt.workers);

  const std::size_t groups = std::min<std::size_t>(8, opt.chains);
  // rate for observable q using chains in [c0, c1)
  auto rate = [&](std::size_t q, std::size_t c0, std::size_t c1) -> std::optional<double> {
    double mean = 0.0, cnt = 0.0;
    for (std::size_t ch = c0; ch < c1; ++ch)
      for (double v : series[ch][q]) {
        mean += v;
        cnt += 1.0;
      }
    mean /= cnt;
    std::vector<double> C(max_lag + 1, 0.0);
    for (std::size_t ch = c0; ch < c1; ++ch) {
      const auto& y = series[ch][q];
      for (std::size_t l = 0; l <= max_lag; ++l) {
        double acc = 0.0;
        for (std::size_t t = 0; t + l < samples; ++t) acc += (y[t] - mean) * (y[t + l] - mean);
        C[l] += acc / static_cast<double>(samples - l);
      }
    }
    const double c0v = C[0];
    if (!(c0v > 0.0)) return std::nullopt;
    for (auto& c : C) c /= c0v;
    return detail::decay_rate(C, sdt);
  };

  double best = INFINITY;
  std::size_t best_q = 0;
  for (std::size_t q = 0; q < nobs; ++q) {
    const auto r = rate(q, 0, opt.chains);
    out.rates.emplace_back(names[q], r ? *r : NAN);
    if (r && *r > 0.0 && *r < best) {
      best = *r;
      best_q = q;
    }
  }
  if (!std::isfinite(best)) {
    out.flagged = true;
    out.note = "no basket observable gave a usable exponential fit";
    out.lambda = NAN;
    return out;
  }
  out.lambda = best;
  out.slowest = names[best_q];
  Accumulator acc;
  const std::size_t per = opt.chains / groups;
  for (std::size_t g = 0; g < groups; ++g) {
    const auto r = rate(best_q, g * per, (g + 1) * per);
    if (r) acc.add(*r);
  }
  if (acc.count() < 2) {
    out.flagged = true;
    out.note = "group fits failed; standard error unavailable";
  } else {
    out.se = acc.stderr_();
  }
  if (out.se > 0.2 * out.lambda) {
    out.flagged = true;
    out.note = "standard error above 20% of the estimate";
  }
  return out;
}

// Observable on the first k sites.
struct LocalObservable {
  std::size_t k = 1;
  std::function<double(const Site*)> f;
  std::string name;
};

struct MicroOptions {
  std::size_t chains = 32;
  std::size_t sweeps = 20000;     // per chain after burn-in
  std::size_t burn_in = 2000;     // sweeps
  std::size_t thin = 1;           // sweeps between recorded samples
  PairSelection pairs = PairSelection::all_pairs;
  bool symmetrize = true;         // average G over all cyclic windows of k sites
  std::uint64_t seed = 1;
  unsigned workers = default_workers();
};

// <G | w>_n with a standard error from independent chains (batch means within each chain).
inline Estimate micro_expectation(const PotentialSpec& spec, const LocalObservable& G, const Eigen::Vector3d& w,
                                  std::size_t n, const MicroOptions& opt = {}) {
  if (n < G.k) throw domain_error("need n >= k for a k-site observable");
  if (opt.chains < 2) throw domain_error("need at least two chains for an error bar");
  if (opt.symmetrize && opt.pairs != PairSelection::all_pairs)
    throw domain_error("window averaging relies on the exchangeable all-pairs sampler");
  std::vector<double> chain_mean(opt.chains);
  parallel_for(
      opt.chains,
      [&](std::size_t ch) {
        MicroSampler ms(spec, feasible_microstate(spec, w, n), replica_rng(opt.seed, ch, 3), opt.pairs);
        for (std::size_t b = 0; b < opt.burn_in; ++b) ms.sweep();
        std::vector<Site> window(G.k);
        Accumulator acc;
        for (std::size_t t = 0; t < opt.sweeps; ++t) {
          ms.sweep();
          if (t % opt.thin != 0) continue;
          const auto& x = ms.state().x;
          if (opt.symmetrize) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              for (std::size_t q = 0; q < G.k; ++q) window[q] = x[(j + q) % n];
              s += G.f(window.data());
            }
            acc.add(s / static_cast<double>(n));
          } else {
            acc.add(G.f(x.data()));
          }
        }
        if (ms.state().constraint_error(spec) > 1e-10)
          throw numerical_error("sampler drifted off the microcanonical manifold by " +
                                std::to_string(ms.state().constraint_error(spec)));
        chain_mean[ch] = acc.mean();
      },
      opt.workers);
  return estimate_of(chain_mean);
}

struct EnsemblePoint {
  std::size_t n = 0;
  Estimate micro;
  double gap = 0.0, se = 0.0;
};

struct EnsemblesCurve {
  std::vector<EnsemblePoint> points;
  double canonical = 0.0;
  double slope = NAN, slope_se = NAN;
  bool inconclusive = false;
  std::string note;
};

// g(n) = |<G|u_lambda>_n - E_canonical[G]| and the least-squares slope of log g on log n.
inline EnsemblesCurve ensembles_gap_curve(const PotentialSpec& spec, const LocalObservable& G, Lambda lam,
                                          double canonical_value, const std::vector<std::size_t>& n_list,
                                          const MicroOptions& opt = {}) {
  const auto mq = mean_quantities(spec, lam);
  const Eigen::Vector3d u(0.0, mq.r, mq.e);
  EnsemblesCurve c;
  c.canonical = canonical_value;
  std::vector<double> lx, ly, lw;
  std::ostringstream weak;
  for (std::size_t n : n_list) {
    EnsemblePoint pt;
    pt.n = n;
    auto o = opt;
    o.seed = opt.seed + 1000003ull * n;
    pt.micro = micro_expectation(spec, G, u, n, o);
    pt.gap = std::abs(pt.micro.mean - canonical_value);
    pt.se = pt.micro.se;
    if (!(pt.gap > 2.0 * pt.se)) {
      c.inconclusive = true;
      const double need = pt.gap > 0.0 ? std::pow(2.0 * pt.se / pt.gap, 2.0) : INFINITY;
      weak << "n=" << n << ": gap " << pt.gap << " within 2 se (" << pt.se << "); needs ~"
           << (std::isfinite(need) ? std::to_string(need) + "x the samples" : std::string("unbounded samples"))
           << "; ";
    }
    if (pt.gap > 0.0) {
      lx.push_back(std::log(static_cast<double>(n)));
      ly.push_back(std::log(pt.gap));
    }
    c.points.push_back(pt);
  }
  if (lx.size() >= 2) {
    c.slope = fit_slope(lx, ly);
    // delta method: sd of log g is se/g; propagate through the LS weights
    const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / lx.size();
    double sxx = 0.0;
    for (double x : lx) sxx += (x - mx) * (x - mx);
    double var = 0.0;
    std::size_t j = 0;
    for (const auto& pt : c.points) {
      if (!(pt.gap > 0.0)) continue;
      const double wgt = (lx[j++] - mx) / sxx;
      var += wgt * wgt * (pt.se / pt.gap) * (pt.se / pt.gap);
    }
    c.slope_se = std::sqrt(var);
  } else {
    c.inconclusive = true;
  }
  c.note = weak.str();
  return c;
}

// I_lambda(u) = Z*(u) - Z*(u_lambda) - grad Z*(u_lambda).(u - u_lambda) with
// Z*(p, r, e) = -S(r, e - p^2/2) and grad Z*(u_lambda) = (0, beta tau, -beta).
inline double rate_function(const PotentialSpec& spec, Lambda lam, const Eigen::Vector3d& u) {
  lam.validate();
  const double ein = u[2] - 0.5 * u[0] * u[0];
  if (!(ein > spec.V(u[1])))
    throw domain_error("u outside the admissible domain: need e - p^2/2 > V(r)");
  const auto mq = mean_quantities(spec, lam);
  const Eigen::Vector3d ul(0.0, mq.r, mq.e);
  const double z = -entropy_and_multipliers(spec, u[1], ein).S;
  const double zl = -entropy_and_multipliers(spec, mq.r, mq.e).S;
  const Eigen::Vector3d grad(0.0, lam.beta * lam.tau, -lam.beta);
  return z - zl - grad.dot(u - ul);
}

// Tail bound for |mean of n draws - u_lambda| >= delta from the exponential Chebyshev
// argument: each of the 2^d sign directions gamma has I_gamma >= delta^2 / (2 M |gamma|^2).
inline double ld_tail_bound(std::size_t n, double delta, double M, int d) {
  return std::pow(2.0, d) * std::exp(-static_cast<double>(n) * delta * delta / (2.0 * M * d));
}

}  // namespace ochain

#endif
