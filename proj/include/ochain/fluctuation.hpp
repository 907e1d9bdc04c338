#ifndef OCHAIN_FLUCTUATION_HPP
#define OCHAIN_FLUCTUATION_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/tools/minima.hpp>
#include <cmath>
#include <functional>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "chain.hpp"
#include "error.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "stats.hpp"
#include "thermo.hpp"

namespace ochain {

enum class Branch { sine, cosine, entropy_sine, entropy_cosine };

inline std::string to_string(Branch b) {
  switch (b) {
    case Branch::sine: return "sine";
    case Branch::cosine: return "cosine";
    case Branch::entropy_sine: return "entropy-sine";
    default: return "entropy-cosine";
  }
}

inline Branch parse_branch(const std::string& s) {
  for (auto b : {Branch::sine, Branch::cosine, Branch::entropy_sine, Branch::entropy_cosine})
    if (to_string(b) == s) return b;
  throw domain_error("unknown mode branch '" + s + "'");
}

inline bool is_entropy(Branch b) { return b == Branch::entropy_sine || b == Branch::entropy_cosine; }

struct Mode {
  Branch branch = Branch::sine;
  int n = 0;

  // theta_n = (2n+1) pi / 2 for the sound branches, kappa_n = 2 n pi for the entropy ones
  double wavenumber() const {
    return is_entropy(branch) ? 2.0 * n * std::numbers::pi : (2.0 * n + 1.0) * std::numbers::pi / 2.0;
  }
  std::string label() const { return to_string(branch) + "-" + std::to_string(n); }
};

// Scalar profile sqrt2 sin/cos(k x) and the constant 3-vector it multiplies (a column of R).
struct ModeShape {
  double k;
  bool is_sin;
  Eigen::Vector3d dir;

  Eigen::Vector3d at(double x) const {
    return std::numbers::sqrt2 * (is_sin ? std::sin(k * x) : std::cos(k * x)) * dir;
  }
  Eigen::Vector3d dx(double x) const {
    return std::numbers::sqrt2 * k * (is_sin ? std::cos(k * x) : -std::sin(k * x)) * dir;
  }
};

inline ModeShape mode_shape(const CanonicalParams& cp, Mode m) {
  if (m.n < 0) throw domain_error("mode index must be >= 0");
  const int col = m.branch == Branch::sine ? 0 : m.branch == Branch::cosine ? 1 : 2;
  const bool s = m.branch == Branch::sine || m.branch == Branch::entropy_sine;
  return {m.wavenumber(), s, cp.R.col(col)};
}

// R m_{i,n} or R n_{i,n} sampled at x = i/N, i = 1..N
inline std::vector<Eigen::Vector3d> mode_profile(const CanonicalParams& cp, Mode m, std::size_t N) {
  const auto sh = mode_shape(cp, m);
  std::vector<Eigen::Vector3d> h(N);
  for (std::size_t i = 1; i <= N; ++i) h[i - 1] = sh.at(static_cast<double>(i) / N);
  return h;
}

// Y_N = N^-1/2 sum_i H(i/N) . (w_i - w_bar)
inline double field(const PotentialSpec& spec, const ChainState& s, const Eigen::Vector3d& w_bar,
                    const std::vector<Eigen::Vector3d>& H) {
  const std::size_t N = s.size();
  if (H.size() != N)
    throw domain_error("test function has " + std::to_string(H.size()) + " grid values for N = " +
                       std::to_string(N));
  double y = 0.0;
  for (std::size_t i = 0; i < N; ++i)
    y += H[i][0] * s.p[i] + H[i][1] * (s.r[i] - w_bar[1]) + H[i][2] * (s.energy(spec, i) - w_bar[2]);
  return y / std::sqrt(static_cast<double>(N));
}

inline double field(const CanonicalParams& cp, const ChainState& s, const std::vector<Eigen::Vector3d>& H) {
  return field(cp.spec, s, cp.w_bar(), H);
}

// <H, Sigma G> as the Riemann sum over x = i/N
inline double riemann_pairing(const std::vector<Eigen::Vector3d>& H, const Eigen::Matrix3d& sigma,
                              const std::vector<Eigen::Vector3d>& G) {
  if (H.size() != G.size()) throw domain_error("grid mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < H.size(); ++i) s += H[i].dot(sigma * G[i]);
  return s / static_cast<double>(H.size());
}

struct ModeValue {
  Mode mode;
  double value;
};

// Weight of one mode in ||.||_{-k}; the kappa_0 = 0 entropy term gets weight 1.
inline double hk_weight(Mode m, double k) {
  const double w = m.wavenumber();
  return w == 0.0 ? 1.0 : std::pow(w, -2.0 * k);
}

inline double hk_norm(const std::vector<ModeValue>& values, double k, int n_max = 16) {
  double s = 0.0;
  for (const auto& v : values) {
    if (v.mode.n > n_max)
      throw domain_error("mode " + v.mode.label() + " is above the cutoff n_max = " + std::to_string(n_max));
    s += hk_weight(v.mode, k) * v.value * v.value;
  }
  return s;
}

// Equilibrium expectation of the modes dropped by the cutoff: each Y^2(R m) has mean
// Q_11 or Q_22, each Y^2(R n) mean Q_33, so the tail is a weighted zeta-type sum.
inline double hk_tail_expectation(const CanonicalParams& cp, double k, int n_max) {
  if (!(k > 0.5)) throw domain_error("the H_-k tail is summable only for k > 1/2");
  auto tail = [&](auto wn) {
    double s = 0.0;
    int n = n_max + 1;
    for (; n < n_max + 100000; ++n) s += std::pow(wn(n), -2.0 * k);
    // remaining terms below the integral of the decreasing summand
    const double slope = wn(n + 1) - wn(n);
    return s + std::pow(wn(n - 1), 1.0 - 2.0 * k) / ((2.0 * k - 1.0) * slope);
  };
  const double sound = tail([](int n) { return (2.0 * n + 1.0) * std::numbers::pi / 2.0; });
  const double entropy = tail([](int n) { return 2.0 * n * std::numbers::pi; });
  return (cp.Q(0, 0) + cp.Q(1, 1)) * sound + 2.0 * cp.Q(2, 2) * entropy;
}

// values[replica][time index] of Y_N(t, R mode)
struct ModeSeries {
  Mode mode;
  std::vector<double> times;
  std::vector<std::vector<double>> values;

  void validate() const {
    for (std::size_t i = 1; i < times.size(); ++i)
      if (!(times[i] > times[i - 1])) throw domain_error("mode series times must be strictly increasing");
    for (const auto& row : values)
      if (row.size() != times.size()) throw domain_error("mode series row length differs from the time grid");
  }
};

struct Correlation {
  std::vector<double> lags, C, se;
  std::size_t samples = 0;  // replicas, or batches in the batch-means fallback
  bool batch_means = false;
};

// E[Y(t+s) Y(s)] on an equispaced grid. With >= 30 replicas: per-replica averages over
// time origins, then mean and standard error across replicas. Otherwise the origins of
// each trajectory are cut into batches and the batches play the role of replicas.
inline Correlation autocorrelation(const ModeSeries& series, std::size_t max_lag, std::size_t min_samples = 30) {
  series.validate();
  const std::size_t T = series.times.size();
  if (T == 0 || series.values.empty()) throw domain_error("empty mode series");
  if (max_lag >= T) throw domain_error("max_lag must be below the series length");
  const double dt = T > 1 ? series.times[1] - series.times[0] : 0.0;
  for (std::size_t i = 1; i < T; ++i)
    if (std::abs(series.times[i] - series.times[i - 1] - dt) > 1e-9 * (1.0 + std::abs(dt)))
      throw domain_error("autocorrelation needs an equispaced time grid");

  Correlation out;
  for (std::size_t l = 0; l <= max_lag; ++l) out.lags.push_back(l * dt);
  const std::size_t origins = T - max_lag;

  std::vector<std::vector<double>> rows;  // one estimate vector per sample
  if (series.values.size() >= min_samples) {
    for (const auto& y : series.values) {
      std::vector<double> c(max_lag + 1, 0.0);
      for (std::size_t l = 0; l <= max_lag; ++l) {
        for (std::size_t s = 0; s < origins; ++s) c[l] += y[s] * y[s + l];
        c[l] /= static_cast<double>(origins);
      }
      rows.push_back(std::move(c));
    }
  } else {
    const std::size_t per = origins * series.values.size();
    const std::size_t batch = std::max<std::size_t>(2 * (max_lag + 1), 1);
    if (per / batch < min_samples || origins < batch)
      throw domain_error("insufficient data for autocorrelation: " + std::to_string(series.values.size()) +
                         " replicas and " + std::to_string(origins) + " time origins give fewer than " +
                         std::to_string(min_samples) + " batches");
    out.batch_means = true;
    for (const auto& y : series.values)
      for (std::size_t b0 = 0; b0 + batch <= origins; b0 += batch) {
        std::vector<double> c(max_lag + 1, 0.0);
        for (std::size_t l = 0; l <= max_lag; ++l) {
          for (std::size_t s = b0; s < b0 + batch; ++s) c[l] += y[s] * y[s + l];
          c[l] /= static_cast<double>(batch);
        }
        rows.push_back(std::move(c));
      }
  }
  out.samples = rows.size();
  for (std::size_t l = 0; l <= max_lag; ++l) {
    Accumulator a;
    for (const auto& r : rows) a.add(r[l]);
    out.C.push_back(a.mean());
    out.se.push_back(a.stderr_());
  }
  return out;
}

struct CosineFit {
  double A = 0.0, omega = 0.0, rss = 0.0;
};

// Weighted least squares C(t) ~ A cos(omega t); A is solved in closed form for each omega,
// omega by a grid scan refined with Brent.
inline CosineFit fit_cosine(const std::vector<double>& t, const std::vector<double>& C,
                            const std::vector<double>& se, double omega_lo, double omega_hi) {
  if (t.size() != C.size() || (!se.empty() && se.size() != C.size()) || t.size() < 3)
    throw domain_error("fit_cosine needs matching series of length >= 3");
  if (!(omega_hi > omega_lo && omega_lo >= 0.0)) throw domain_error("bad frequency window");
  auto weight = [&](std::size_t i) { return se.empty() || !(se[i] > 0.0) ? 1.0 : 1.0 / (se[i] * se[i]); };
  auto solve = [&](double w) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double c = std::cos(w * t[i]);
      num += weight(i) * C[i] * c;
      den += weight(i) * c * c;
    }
    const double A = den > 0.0 ? num / den : 0.0;
    double rss = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double d = C[i] - A * std::cos(w * t[i]);
      rss += weight(i) * d * d;
    }
    return CosineFit{A, w, rss};
  };
  const int grid = 2000;
  const double step = (omega_hi - omega_lo) / grid;
  CosineFit best = solve(omega_lo);
  for (int g = 1; g <= grid; ++g) {
    const auto f = solve(omega_lo + g * step);
    if (f.rss < best.rss) best = f;
  }
  const double lo = std::max(omega_lo, best.omega - step), hi = std::min(omega_hi, best.omega + step);
  const auto m = boost::math::tools::brent_find_minima([&](double w) { return solve(w).rss; }, lo, hi, 50);
  const auto refined = solve(m.first);
  return refined.rss <= best.rss ? refined : best;
}

struct FrequencyEstimate {
  double omega = 0.0, omega_se = NAN;
  double amplitude = 0.0, amplitude_se = NAN;
  Correlation correlation;
};

// Cosine fit to the autocorrelation of one series; standard errors by a delete-one-group
// jackknife over `groups` blocks of replicas (NaN when there are too few replicas).
inline FrequencyEstimate fit_mode_frequency(const ModeSeries& series, std::size_t max_lag, double omega_lo,
                                            double omega_hi, std::size_t groups = 8) {
  FrequencyEstimate out;
  out.correlation = autocorrelation(series, max_lag);
  const auto& c = out.correlation;
  const auto f = fit_cosine(c.lags, c.C, c.se, omega_lo, omega_hi);
  out.omega = f.omega;
  out.amplitude = f.A;
  const std::size_t R = series.values.size();
  if (groups < 2 || R < 2 * groups || out.correlation.batch_means) return out;
  std::vector<double> om, am;
  for (std::size_t g = 0; g < groups; ++g) {
    ModeSeries sub{series.mode, series.times, {}};
    for (std::size_t k = 0; k < R; ++k)
      if (k * groups / R != g) sub.values.push_back(series.values[k]);
    // the subsets may hold fewer than 30 replicas; they only feed the spread
    const auto cs = autocorrelation(sub, max_lag, 1);
    const auto fs = fit_cosine(cs.lags, cs.C, cs.se, omega_lo, omega_hi);
    om.push_back(fs.omega);
    am.push_back(fs.A);
  }
  auto jk = [&](const std::vector<double>& v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt((v.size() - 1.0) / v.size() * s);
  };
  out.omega_se = jk(om);
  out.amplitude_se = jk(am);
  return out;
}

// Runs `replicas` equilibrium chains and records Y_N(t, R mode) for every mode at each time.
struct ModeRun {
  std::vector<ModeSeries> series;
};

inline ModeRun record_modes(const CanonicalParams& cp, std::size_t N, Boundary boundary, const SimConfig& cfg,
                            const std::vector<Mode>& modes, const std::vector<double>& times,
                            unsigned workers = default_workers()) {
  validate_chain(N, boundary, cfg.integrator);
  cfg.validate(cp.spec, N);
  ModeRun run;
  std::vector<std::vector<Eigen::Vector3d>> profiles;
  for (const auto& m : modes) {
    profiles.push_back(mode_profile(cp, m, N));
    run.series.push_back({m, times, std::vector<std::vector<double>>(cfg.replicas, std::vector<double>(times.size()))});
  }
  for (auto& s : run.series) s.validate();
  parallel_for(
      cfg.replicas,
      [&](std::size_t rep) {
        auto rng = replica_rng(cfg.seed, rep);
        auto s = sample_equilibrium(cp.spec, cp.lambda(), N, boundary, rng);
        NormalStream ns(rng);
        for (std::size_t k = 0; k < times.size(); ++k) {
          if (times[k] > s.t_macro) advance(cp.spec, s, cfg, times[k] - s.t_macro, ns);
          for (std::size_t m = 0; m < modes.size(); ++m) run.series[m].values[rep][k] = field(cp, s, profiles[m]);
        }
      },
      workers);
  return run;
}

// iota_i Phi = J_{A,i} - B (w_i - w_bar) for the bond (i, i+1), centred so that its Gibbs mean vanishes.
inline Eigen::Vector3d bg_local_residual(const CanonicalParams& cp, const ChainState& s, std::size_t i) {
  const auto& spec = cp.spec;
  const double f = spec.dV(s.r[i + 1]) - cp.tau;
  return {f - cp.tau_r * (s.r[i] - cp.r_bar) - cp.tau_e * (s.energy(spec, i) - cp.e_bar), 0.0, s.p[i] * f};
}

// dH(s, x) returns d/dx H at time s.
using TestGradient = std::function<Eigen::Vector3d(double, double)>;

// sup_{t <= T} |N^-1/2 int_0^t sum_{i<N} dH(s, i/N) . iota_i Phi ds|^2 along one wall-tension
// trajectory; the time integral is the trapezoid rule over the micro steps.
inline double bg_residual_sup2(const CanonicalParams& cp, ChainState& s, const SimConfig& cfg, const TestGradient& dH,
                               double T, NormalStream& ns) {
  if (s.boundary != Boundary::wall_tension) throw domain_error("the residual is defined for wall-tension chains");
  const std::size_t N = s.size();
  const std::size_t k = substeps_for(cp.spec, s, cfg, T);
  const double h = T / static_cast<double>(k);
  auto integrand = [&](double t) {
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < N; ++i) sum += dH(t, static_cast<double>(i + 1) / N).dot(bg_local_residual(cp, s, i));
    return sum / std::sqrt(static_cast<double>(N));
  };
  double integral = 0.0, sup2 = 0.0;
  double prev = integrand(s.t_macro);
  const double t0 = s.t_macro;
  for (std::size_t step = 0; step < k; ++step) {
    strang_step(cp.spec, s, cfg, h, ns);
    const double cur = integrand(t0 + (step + 1) * h);
    integral += 0.5 * h * (prev + cur);
    prev = cur;
    sup2 = std::max(sup2, integral * integral);
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < N; ++i) worst = std::max({worst, std::abs(s.p[i]), std::abs(s.r[i])});
  if (!(worst <= 1e6)) throw instability_error("chain unstable during the residual integral", t0);
  s.t_macro = t0 + T;
  return sup2;
}

inline Estimate bg_residual_variance(const CanonicalParams& cp, std::size_t N, const SimConfig& cfg,
                                     const TestGradient& dH, double T, unsigned workers = default_workers()) {
  validate_chain(N, Boundary::wall_tension, cfg.integrator);
  cfg.validate(cp.spec, N);
  if (!(T > 0.0)) throw domain_error("T must be positive");
  std::vector<double> sup2(cfg.replicas);
  parallel_for(
      cfg.replicas,
      [&](std::size_t rep) {
        auto rng = replica_rng(cfg.seed, rep, 1);
        auto s = sample_equilibrium(cp.spec, cp.lambda(), N, Boundary::wall_tension, rng);
        NormalStream ns(rng);
        sup2[rep] = bg_residual_sup2(cp, s, cfg, dH, T, ns);
      },
      workers);
  if (sup2.size() < 2) return {sup2.empty() ? 0.0 : sup2[0], 0.0};
  return estimate_of(sup2);
}

// Time-independent test function built from modes: H = sum_j coef_j R mode_j.
inline TestGradient mode_gradient(const CanonicalParams& cp, const std::vector<Mode>& modes,
                                  const std::vector<double>& coef) {
  if (modes.size() != coef.size()) throw domain_error("one coefficient per mode");
  std::vector<ModeShape> shapes;
  for (const auto& m : modes) shapes.push_back(mode_shape(cp, m));
  return [shapes, coef](double, double x) {
    Eigen::Vector3d g = Eigen::Vector3d::Zero();
    for (std::size_t j = 0; j < shapes.size(); ++j) g += coef[j] * shapes[j].dx(x);
    return g;
  };
}

}  // namespace ochain

#endif
