#ifndef OCHAIN_TOOLS_EXPERIMENT_HPP
#define OCHAIN_TOOLS_EXPERIMENT_HPP

// Config parsing, validation and the experiment runners behind the ochain CLI.

#include <json.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ochain/chain.hpp"
#include "ochain/euler.hpp"
#include "ochain/fluctuation.hpp"
#include "ochain/microcanonical.hpp"
#include "ochain/thermo.hpp"

namespace ochain::cli {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

enum class Experiment { thermo, simulate, modes, euler, gap, ensembles, bg_residual };

inline const std::vector<std::pair<Experiment, std::string>>& experiment_names() {
  static const std::vector<std::pair<Experiment, std::string>> v{
      {Experiment::thermo, "thermo"}, {Experiment::simulate, "simulate"}, {Experiment::modes, "modes"},
      {Experiment::euler, "euler"},   {Experiment::gap, "gap"},           {Experiment::ensembles, "ensembles"},
      {Experiment::bg_residual, "bg-residual"}};
  return v;
}

inline std::string to_string(Experiment e) {
  for (const auto& [k, n] : experiment_names())
    if (k == e) return n;
  return "?";
}

inline Experiment parse_experiment(const std::string& s) {
  for (const auto& [k, n] : experiment_names())
    if (n == s) return k;
  throw config_error("unknown experiment '" + s + "'");
}

enum class KeyType { real, integer, text, int_list, mode_list, vec3 };

struct KeySpec {
  std::string name;
  KeyType type;
  std::set<Experiment> required;  // experiments for which the key must be present
  std::string help;
  std::vector<std::string> choices = {};
  std::optional<double> min = std::nullopt;  // inclusive lower bound for numbers and list entries
  bool positive = false;                    // strict > 0
};

inline const std::vector<KeySpec>& schema() {
  using E = Experiment;
  const std::set<E> all{E::thermo, E::simulate, E::modes, E::euler, E::gap, E::ensembles, E::bg_residual};
  static const std::vector<KeySpec> s{
      {"experiment", KeyType::text, {}, "optional; must match the subcommand when given",
       {"thermo", "simulate", "modes", "euler", "gap", "ensembles", "bg-residual"}},
      {"potential.kind", KeyType::text, all, "harmonic | softened-quadratic", {"harmonic", "softened-quadratic"}},
      {"potential.a", KeyType::real, {}, "anharmonicity, > -1; required for softened-quadratic", {}, std::nullopt},
      {"thermo.beta", KeyType::real, all, "inverse temperature", {}, std::nullopt, true},
      {"thermo.tau", KeyType::real, all, "tension", {}},
      {"dynamics.N", KeyType::integer, {E::simulate, E::modes}, "chain length", {}, 2.0},
      {"dynamics.gamma", KeyType::real, {}, "noise strength (default 1)", {}, 0.0},
      {"dynamics.boundary", KeyType::text, {}, "wall-tension | periodic (default wall-tension)",
       {"wall-tension", "periodic"}},
      {"dynamics.integrator", KeyType::text, {}, "strang-circle | direct-em (default strang-circle)",
       {"strang-circle", "direct-em"}},
      {"dynamics.dt_macro", KeyType::real, {}, "macroscopic checkpoint step (default 0.01)", {}, std::nullopt, true},
      {"dynamics.h_micro", KeyType::real, {}, "micro step; default 0.05/(N sqrt(delta+) max(1, gamma))", {},
       std::nullopt, true},
      {"dynamics.t_end", KeyType::real, {E::simulate, E::modes}, "final macroscopic time", {}, std::nullopt, true},
      {"dynamics.record_every", KeyType::real, {}, "output interval in macroscopic time (default 0.05)", {},
       std::nullopt, true},
      {"run.replicas", KeyType::integer, {}, "independent replicas (default 1; 64 for modes; 200 for bg-residual)", {},
       1.0},
      {"run.seed", KeyType::integer, {}, "master seed (default 1); --seed overrides", {}, 0.0},
      {"run.workers", KeyType::integer, {}, "worker threads (default: hardware concurrency)", {}, 1.0},
      {"output.dir", KeyType::text, {}, "output directory (default runs/<config name>); --out overrides"},
      {"modes.list", KeyType::mode_list, {E::modes}, "comma list of branch:n, e.g. sine:0,entropy-cosine:1"},
      {"modes.max_lag", KeyType::integer, {}, "autocorrelation lags in records (default half the records)", {}, 1.0},
      {"euler.modes", KeyType::mode_list, {E::euler}, "comma list of branch:n"},
      {"euler.t_end", KeyType::real, {E::euler}, "final time of the covariance table", {}, std::nullopt, true},
      {"euler.dt", KeyType::real, {}, "time step of the covariance table (default 0.05)", {}, std::nullopt, true},
      {"gap.K", KeyType::int_list, {E::gap}, "comma list of block sizes K >= 2", {}, 2.0},
      {"gap.w", KeyType::vec3, {}, "mean vector p,r,e (default the canonical mean at beta, tau)"},
      {"gap.chains", KeyType::integer, {}, "diffusion chains per K (default 32)", {}, 2.0},
      {"gap.h", KeyType::real, {}, "circle diffusion step (default 0.01)", {}, std::nullopt, true},
      {"gap.run_time", KeyType::real, {}, "run length per chain (default 24 K^2)", {}, std::nullopt, true},
      {"ensembles.n", KeyType::int_list, {E::ensembles}, "comma list of block sizes n", {}, 2.0},
      {"ensembles.observable", KeyType::text, {E::ensembles}, "p1 | e1 | p1^2 | p1^4 | dV1",
       {"p1", "e1", "p1^2", "p1^4", "dV1"}},
      {"ensembles.chains", KeyType::integer, {}, "MCMC chains per n (default 32)", {}, 2.0},
      {"ensembles.sweeps", KeyType::integer, {}, "recorded sweeps per chain (default 20000)", {}, 1.0},
      {"ensembles.burn_in", KeyType::integer, {}, "discarded sweeps per chain (default 2000)", {}, 0.0},
      {"bg.N", KeyType::int_list, {E::bg_residual}, "comma list of chain lengths", {}, 2.0},
      {"bg.T", KeyType::real, {E::bg_residual}, "time horizon of the residual", {}, std::nullopt, true},
      {"bg.modes", KeyType::mode_list, {}, "test function as a sum of modes (default sine:0,cosine:0)"},
  };
  return s;
}

inline std::string to_string(KeyType t) {
  switch (t) {
    case KeyType::real: return "real";
    case KeyType::integer: return "integer";
    case KeyType::text: return "text";
    case KeyType::int_list: return "integer list";
    case KeyType::mode_list: return "mode list";
    case KeyType::vec3: return "real triple";
  }
  return "?";
}

// The shipped schema document, rendered from the table above.
inline std::string schema_text() {
  std::ostringstream os;
  os << "# Config schema for `ochain <subcommand> --config FILE`.\n"
        "# One `key = value` per line, '#' starts a comment, unknown keys are rejected.\n"
        "# Lists are comma separated. Modes are branch:n with branch in\n"
        "# sine | cosine | entropy-sine | entropy-cosine.\n\n";
  for (const auto& k : schema()) {
    os << k.name << "\n  type: " << to_string(k.type);
    if (k.positive) os << ", > 0";
    else if (k.min) os << ", >= " << *k.min;
    os << "\n  required for: ";
    if (k.required.empty()) {
      os << "none";
    } else if (k.required.size() == experiment_names().size()) {
      os << "all";
    } else {
      bool first = true;
      for (const auto& [e, n] : experiment_names())
        if (k.required.count(e)) {
          os << (first ? "" : ", ") << n;
          first = false;
        }
    }
    os << "\n  " << k.help << "\n\n";
  }
  return os.str();
}

inline const KeySpec* find_key(const std::string& name) {
  for (const auto& k : schema())
    if (k.name == name) return &k;
  return nullptr;
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

inline std::optional<double> parse_real(const std::string& s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::optional<long long> parse_int(const std::string& s) {
  long long v = 0;
  const auto* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end) return std::nullopt;
  return v;
}

inline Mode parse_mode(const std::string& s) {
  const auto parts = split(s, ':');
  if (parts.size() != 2) throw config_error("mode '" + s + "' is not branch:n");
  const auto n = parse_int(parts[1]);
  if (!n || *n < 0) throw config_error("mode '" + s + "' needs an index n >= 0");
  try {
    return {parse_branch(parts[0]), static_cast<int>(*n)};
  } catch (const domain_error& e) {
    throw config_error(e.what());
  }
}

// Flat `section.key = value` lines; '#' starts a comment.
class Config {
 public:
  static Config parse(std::istream& in, const std::string& source = "<config>") {
    Config c;
    c.source_ = source;
    std::string line;
    int no = 0;
    std::vector<std::string> errors;
    while (std::getline(in, line)) {
      ++no;
      if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        errors.push_back(source + ":" + std::to_string(no) + ": expected key = value");
        continue;
      }
      const auto key = trim(line.substr(0, eq)), val = trim(line.substr(eq + 1));
      if (key.empty() || val.empty()) {
        errors.push_back(source + ":" + std::to_string(no) + ": empty key or value");
        continue;
      }
      if (c.values_.count(key)) {
        errors.push_back(source + ":" + std::to_string(no) + ": duplicate key '" + key + "'");
        continue;
      }
      c.values_[key] = val;
    }
    if (!errors.empty()) throw config_error(join(errors));
    return c;
  }

  static Config load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot read config file " + path.string());
    auto c = parse(in, path.string());
    c.stem_ = path.stem().string();
    return c;
  }

  bool has(const std::string& k) const { return values_.count(k) > 0; }
  const std::string& raw(const std::string& k) const { return values_.at(k); }
  void set(const std::string& k, const std::string& v) { values_[k] = v; }
  const std::map<std::string, std::string>& values() const { return values_; }
  const std::string& stem() const { return stem_; }

  double real(const std::string& k, double fallback) const { return has(k) ? *parse_real(raw(k)) : fallback; }
  double real(const std::string& k) const { return *parse_real(raw(k)); }
  long long integer(const std::string& k, long long fallback) const { return has(k) ? *parse_int(raw(k)) : fallback; }
  std::string text(const std::string& k, const std::string& fallback) const { return has(k) ? raw(k) : fallback; }
  std::vector<std::size_t> int_list(const std::string& k) const {
    std::vector<std::size_t> v;
    for (const auto& s : split(raw(k), ',')) v.push_back(static_cast<std::size_t>(*parse_int(s)));
    return v;
  }
  std::vector<Mode> modes(const std::string& k, const std::string& fallback = "") const {
    std::vector<Mode> v;
    for (const auto& s : split(has(k) ? raw(k) : fallback, ',')) v.push_back(parse_mode(s));
    return v;
  }
  Eigen::Vector3d vec3(const std::string& k) const {
    const auto p = split(raw(k), ',');
    return {*parse_real(p[0]), *parse_real(p[1]), *parse_real(p[2])};
  }

  static std::string join(const std::vector<std::string>& errors) {
    std::string s;
    for (const auto& e : errors) s += (s.empty() ? "" : "\n") + e;
    return s;
  }

 private:
  std::map<std::string, std::string> values_;
  std::string source_, stem_ = "run";
};

inline PotentialSpec potential_from(const Config& c) {
  const auto kind = parse_potential_kind(c.text("potential.kind", "harmonic"));
  return {kind, kind == PotentialKind::harmonic ? 0.0 : c.real("potential.a", 0.0)};
}

inline SimConfig sim_config_from(const Config& c) {
  SimConfig cfg;
  cfg.gamma = c.real("dynamics.gamma", 1.0);
  cfg.dt_macro = c.real("dynamics.dt_macro", 0.01);
  if (c.has("dynamics.h_micro")) cfg.h_micro = c.real("dynamics.h_micro");
  cfg.integrator = parse_integrator(c.text("dynamics.integrator", "strang-circle"));
  cfg.seed = static_cast<std::uint64_t>(c.integer("run.seed", 1));
  return cfg;
}

// Every violated constraint, in key order; empty when the config is usable for `e`.
inline std::vector<std::string> validate(const Config& c, Experiment e) {
  std::vector<std::string> errs;
  for (const auto& [key, val] : c.values()) {
    const auto* ks = find_key(key);
    if (!ks) {
      errs.push_back("unknown key '" + key + "'");
      continue;
    }
    auto bound = [&](double v) {
      if (ks->positive && !(v > 0.0)) errs.push_back(key + " must be > 0 (got " + val + ")");
      if (ks->min && v < *ks->min) errs.push_back(key + " must be >= " + json(*ks->min).dump() + " (got " + val + ")");
    };
    switch (ks->type) {
      case KeyType::real:
        if (auto v = parse_real(val)) bound(*v);
        else errs.push_back(key + " must be a real number (got '" + val + "')");
        break;
      case KeyType::integer:
        if (auto v = parse_int(val)) bound(static_cast<double>(*v));
        else errs.push_back(key + " must be an integer (got '" + val + "')");
        break;
      case KeyType::text:
        if (!ks->choices.empty() && std::find(ks->choices.begin(), ks->choices.end(), val) == ks->choices.end())
          errs.push_back(key + " must be one of " + ks->help + " (got '" + val + "')");
        break;
      case KeyType::int_list:
        for (const auto& s : split(val, ',')) {
          if (auto v = parse_int(s)) bound(static_cast<double>(*v));
          else errs.push_back(key + " entry '" + s + "' is not an integer");
        }
        break;
      case KeyType::mode_list:
        for (const auto& s : split(val, ',')) try {
            parse_mode(s);
          } catch (const config_error& ex) {
            errs.push_back(key + ": " + ex.what());
          }
        break;
      case KeyType::vec3: {
        const auto p = split(val, ',');
        if (p.size() != 3 || !parse_real(p[0]) || !parse_real(p[1]) || !parse_real(p[2]))
          errs.push_back(key + " must be three comma-separated reals p,r,e (got '" + val + "')");
        break;
      }
    }
  }
  for (const auto& ks : schema())
    if (ks.required.count(e) && !c.has(ks.name))
      errs.push_back("missing required key '" + ks.name + "' for " + to_string(e));
  if (c.has("experiment") && c.raw("experiment") != to_string(e))
    errs.push_back("config is for experiment '" + c.raw("experiment") + "' but the subcommand is " + to_string(e));
  if (c.text("potential.kind", "") == "softened-quadratic" && !c.has("potential.a"))
    errs.push_back("missing required key 'potential.a' for the softened-quadratic potential");
  if (!errs.empty()) return errs;

  // cross-key constraints, only once every value parses
  try {
    potential_from(c).validate();
  } catch (const domain_error& ex) {
    errs.push_back(std::string("potential: ") + ex.what());
  }
  if (e == Experiment::simulate || e == Experiment::modes) {
    try {
      validate_chain(static_cast<std::size_t>(c.integer("dynamics.N", 0)),
                     parse_boundary(c.text("dynamics.boundary", "wall-tension")),
                     parse_integrator(c.text("dynamics.integrator", "strang-circle")));
    } catch (const domain_error& ex) {
      errs.push_back(std::string("dynamics: ") + ex.what());
    }
  }
  auto check_sim = [&](std::size_t N) {
    try {
      sim_config_from(c).validate(potential_from(c), N);
    } catch (const config_error& ex) {
      errs.push_back("dynamics at N = " + std::to_string(N) + ": " + ex.what());
    } catch (const domain_error& ex) {
      errs.push_back(std::string("dynamics: ") + ex.what());
    }
  };
  if (e == Experiment::simulate || e == Experiment::modes) check_sim(static_cast<std::size_t>(c.integer("dynamics.N", 2)));
  if (e == Experiment::bg_residual)
    for (auto N : c.int_list("bg.N")) check_sim(N);
  if (e == Experiment::bg_residual && c.text("dynamics.boundary", "wall-tension") != "wall-tension")
    errs.push_back("bg-residual is defined for the wall-tension boundary only");
  if (e == Experiment::gap && c.has("gap.w")) {
    const auto w = c.vec3("gap.w");
    if (!(w[2] - 0.5 * w[0] * w[0] - potential_from(c).V(w[1]) > 0.0))
      errs.push_back("gap.w is infeasible: need e > p^2/2 + V(r)");
  }
  if (e == Experiment::ensembles)
    for (auto n : c.int_list("ensembles.n"))
      if (n < 2) errs.push_back("ensembles.n entries must be >= 2");
  return errs;
}

inline json jnum(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json jest(double mean, double se) { return json{{"estimate", jnum(mean)}, {"stderr", jnum(se)}}; }

inline json jmat(const Eigen::Matrix3d& m) {
  json a = json::array();
  for (int i = 0; i < 3; ++i) a.push_back({m(i, 0), m(i, 1), m(i, 2)});
  return a;
}

// Plain decimal text with round-trip precision.
inline std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline void write_text(const fs::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw config_error("cannot write " + p.string());
  f << s;
}

struct RunContext {
  fs::path out;
  std::uint64_t seed = 1;
  unsigned workers = default_workers();
};

inline json header(const Config& c, Experiment e, const RunContext& ctx) {
  const auto spec = potential_from(c);
  return json{{"experiment", to_string(e)},
              {"potential", {{"kind", to_string(spec.kind)}, {"a", spec.anh()}}},
              {"beta", c.real("thermo.beta")},
              {"tau", c.real("thermo.tau")},
              {"seed", ctx.seed}};
}

// Record times 0, d, 2d, ... up to t_end (t_end itself always included).
inline std::vector<double> record_times(double t_end, double every) {
  std::vector<double> t;
  const auto n = static_cast<std::size_t>(std::floor(t_end / every + 1e-9));
  for (std::size_t k = 0; k <= n; ++k) t.push_back(static_cast<double>(k) * every);
  if (t_end - t.back() > 1e-9 * (1.0 + t_end)) t.push_back(t_end);
  return t;
}

inline json run_thermo(const Config& c, const RunContext& ctx) {
  const auto spec = potential_from(c);
  const auto cp = make_canonical(spec, c.real("thermo.beta"), c.real("thermo.tau"));
  const auto tp = entropy_and_multipliers(spec, cp.r_bar, cp.e_bar);
  auto j = header(c, Experiment::thermo, ctx);
  j["G"] = cp.G;
  j["r_bar"] = cp.r_bar;
  j["e_bar"] = cp.e_bar;
  j["S"] = tp.S;
  j["Sigma"] = jmat(cp.Sigma);
  j["tau_r"] = cp.tau_r;
  j["tau_e"] = cp.tau_e;
  j["c"] = cp.c;
  j["R"] = jmat(cp.R);
  j["Q"] = jmat(cp.Q);
  return j;
}

inline json run_simulate(const Config& c, const RunContext& ctx) {
  const auto spec = potential_from(c);
  const Lambda lam{c.real("thermo.beta"), c.real("thermo.tau")};
  const auto N = static_cast<std::size_t>(c.integer("dynamics.N", 2));
  const auto boundary = parse_boundary(c.text("dynamics.boundary", "wall-tension"));
  auto cfg = sim_config_from(c);
  cfg.seed = ctx.seed;
  cfg.replicas = static_cast<std::size_t>(c.integer("run.replicas", 1));
  const auto times = record_times(c.real("dynamics.t_end"), c.real("dynamics.record_every", 0.05));

  std::vector<std::string> csv(cfg.replicas);
  std::vector<std::array<double, 3>> change(cfg.replicas), site_mean(cfg.replicas);
  std::vector<std::uint64_t> substeps(cfg.replicas);
  parallel_for(
      cfg.replicas,
      [&](std::size_t rep) {
        auto rng = replica_rng(cfg.seed, rep);
        auto s = sample_equilibrium(spec, lam, N, boundary, rng);
        NormalStream ns(rng);
        const auto t0 = conserved_totals(spec, s);
        std::ostringstream os;
        os << std::setprecision(17) << "t,site,p,r,e\n";
        for (double t : times) {
          if (t > s.t_macro) advance(spec, s, cfg, t - s.t_macro, ns);
          for (std::size_t i = 0; i < N; ++i)
            os << t << ',' << i + 1 << ',' << s.p[i] << ',' << s.r[i] << ',' << s.energy(spec, i) << '\n';
        }
        const auto t1 = conserved_totals(spec, s);
        change[rep] = {t1.p - t0.p, t1.r - t0.r, t1.e - t0.e};
        site_mean[rep] = {t1.p / N, t1.r / N, t1.e / N};
        substeps[rep] = s.substeps;
        csv[rep] = os.str();
      },
      ctx.workers);

  json files = json::array();
  for (std::size_t rep = 0; rep < cfg.replicas; ++rep) {
    std::ostringstream name;
    name << "trajectory_r" << std::setw(4) << std::setfill('0') << rep << ".csv";
    write_text(ctx.out / name.str(), csv[rep]);
    files.push_back(name.str());
  }
  auto j = header(c, Experiment::simulate, ctx);
  j["N"] = N;
  j["boundary"] = to_string(boundary);
  j["integrator"] = to_string(cfg.integrator);
  j["gamma"] = cfg.gamma;
  j["h_micro"] = cfg.step(spec, N);
  j["t_end"] = times.back();
  j["records"] = times.size();
  j["replicas"] = cfg.replicas;
  j["substeps"] = substeps.front();
  j["files"] = files;
  const char* names[3] = {"p", "r", "e"};
  json tot, mean;
  for (int q = 0; q < 3; ++q) {
    std::vector<double> dv, mv;
    for (std::size_t rep = 0; rep < cfg.replicas; ++rep) {
      dv.push_back(change[rep][q]);
      mv.push_back(site_mean[rep][q]);
    }
    if (cfg.replicas >= 2) {
      const auto d = estimate_of(dv), m = estimate_of(mv);
      tot[names[q]] = jest(d.mean, d.se);
      mean[names[q]] = jest(m.mean, m.se);
    } else {
      tot[names[q]] = jest(dv[0], NAN);
      mean[names[q]] = jest(mv[0], NAN);
    }
  }
  j["total_change"] = tot;
  j["site_mean_at_t_end"] = mean;
  return j;
}

inline json run_modes(const Config& c, const RunContext& ctx) {
  const auto spec = potential_from(c);
  const auto cp = make_canonical(spec, c.real("thermo.beta"), c.real("thermo.tau"));
  const auto ls = linearized_system(cp);
  const auto N = static_cast<std::size_t>(c.integer("dynamics.N", 2));
  const auto boundary = parse_boundary(c.text("dynamics.boundary", "wall-tension"));
  auto cfg = sim_config_from(c);
  cfg.seed = ctx.seed;
  cfg.replicas = static_cast<std::size_t>(c.integer("run.replicas", 64));
  const auto modes = c.modes("modes.list");
  const auto times = record_times(c.real("dynamics.t_end"), c.real("dynamics.record_every", 0.05));
  if (times.size() > 1 && std::abs(times.back() - times[times.size() - 2] - (times[1] - times[0])) > 1e-9)
    throw config_error("dynamics.t_end must be a multiple of dynamics.record_every for mode series");
  const auto max_lag = static_cast<std::size_t>(c.integer("modes.max_lag", static_cast<long long>((times.size() - 1) / 2)));
  if (max_lag >= times.size()) throw config_error("modes.max_lag must be below the number of records");

  const auto run = record_modes(cp, N, boundary, cfg, modes, times, ctx.workers);
  std::ostringstream os;
  os << std::setprecision(17) << "t,mode_branch,mode_n,replica,value\n";
  for (std::size_t k = 0; k < times.size(); ++k)
    for (const auto& ser : run.series)
      for (std::size_t rep = 0; rep < cfg.replicas; ++rep)
        os << times[k] << ',' << to_string(ser.mode.branch) << ',' << ser.mode.n << ',' << rep << ','
           << ser.values[rep][k] << '\n';
  write_text(ctx.out / "modes.csv", os.str());

  auto j = header(c, Experiment::modes, ctx);
  j["N"] = N;
  j["boundary"] = to_string(boundary);
  j["replicas"] = cfg.replicas;
  j["c"] = cp.c;
  json out = json::array();
  for (const auto& ser : run.series) {
    json m{{"branch", to_string(ser.mode.branch)}, {"n", ser.mode.n}};
    m["predicted_variance"] = predicted_mode_covariance(ls, ser.mode, ser.mode, 0.0);
    try {
      if (!is_entropy(ser.mode.branch)) {
        const double w = cp.c * ser.mode.wavenumber();
        const auto f = fit_mode_frequency(ser, max_lag, 0.25 * w, 4.0 * w);
        const auto& cc = f.correlation;
        m["variance"] = jest(cc.C[0], cc.se[0]);
        m["frequency"] = jest(f.omega, f.omega_se);
        m["predicted_frequency"] = w;
        m["amplitude"] = jest(f.amplitude, f.amplitude_se);
      } else {
        const auto cc = autocorrelation(ser, max_lag);
        m["variance"] = jest(cc.C[0], cc.se[0]);
        double lo = INFINITY;
        for (double v : cc.C) lo = std::min(lo, v / cc.C[0]);
        m["min_normalized_correlation"] = lo;
      }
    } catch (const domain_error& ex) {
      m["note"] = ex.what();
    }
    out.push_back(m);
  }
  j["modes"] = out;
  return j;
}

inline json run_euler(const Config& c, const RunContext& ctx) {
  const auto spec = potential_from(c);
  const auto cp = make_canonical(spec, c.real("thermo.beta"), c.real("thermo.tau"));
  const auto ls = linearized_system(cp);
  const auto modes = c.modes("euler.modes");
  const auto times = record_times(c.real("euler.t_end"), c.real("euler.dt", 0.05));
  std::vector<std::pair<Mode, Mode>> pairs;
  for (const auto& m : modes) {
    pairs.push_back({m, m});
    if (m.branch == Branch::sine) pairs.push_back({m, {Branch::cosine, m.n}});
    if (m.branch == Branch::cosine) pairs.push_back({m, {Branch::sine, m.n}});
  }
  std::ostringstream os;
  os << std::setprecision(17) << "t,branch_pair,n,value\n";
  for (double t : times)
    for (const auto& [a, b] : pairs)
      os << t << ',' << to_string(a.branch) << '/' << to_string(b.branch) << ',' << a.n << ','
         << predicted_mode_covariance(ls, a, b, t) + 0.0 << '\n';
  write_text(ctx.out / "euler.csv", os.str());
  auto j = header(c, Experiment::euler, ctx);
  j["c"] = cp.c;
  j["Q"] = jmat(cp.Q);
  json fr = json::array();
  for (const auto& m : modes)
    fr.push_back({{"branch", to_string(m.branch)},
                  {"n", m.n},
                  {"frequency", is_entropy(m.branch) ? 0.0 : cp.c * m.wavenumber()},
                  {"variance", predicted_mode_covariance(ls, m, m, 0.0)}});
  j["modes"] = fr;
  return j;
}

inline json run_gap(const Config& c, const RunContext& ctx) {
  const auto spec = potential_from(c);
  const Lambda lam{c.real("thermo.beta"), c.real("thermo.tau")};
  Eigen::Vector3d w;
  if (c.has("gap.w")) {
    w = c.vec3("gap.w");
  } else {
    const auto mq = mean_quantities(spec, lam);
    w = {0.0, mq.r, mq.e};
  }
  GapOptions opt;
  opt.seed = ctx.seed;
  opt.workers = ctx.workers;
  opt.chains = static_cast<std::size_t>(c.integer("gap.chains", 32));
  opt.h = c.real("gap.h", 0.01);
  opt.run_time = c.real("gap.run_time", 0.0);
  auto j = header(c, Experiment::gap, ctx);
  j["w"] = {w[0], w[1], w[2]};
  json res = json::array();
  for (auto K : c.int_list("gap.K")) {
    const auto g = spectral_gap_estimate(spec, w, K, opt);
    json r{{"K", K}, {"estimate", jnum(g.lambda)}, {"stderr", jnum(g.se)}, {"scaled", jnum(g.lambda * K * K)},
           {"method", g.method}, {"flagged", g.flagged}};
    if (!g.slowest.empty()) r["slowest"] = g.slowest;
    if (!g.note.empty()) r["note"] = g.note;
    if (K == 2) r["poincare_ratio_cos"] = poincare_ratio_cos(spec, w);
    res.push_back(r);
  }
  j["results"] = res;
  return j;
}

inline LocalObservable observable_named(const std::string& name, const PotentialSpec& spec) {
  if (name == "p1") return {1, [](const Site* x) { return x[0].p; }, name};
  if (name == "e1") return {1, [spec](const Site* x) { return 0.5 * x[0].p * x[0].p + spec.V(x[0].r); }, name};
  if (name == "p1^2") return {1, [](const Site* x) { return x[0].p * x[0].p; }, name};
  if (name == "p1^4") return {1, [](const Site* x) { return std::pow(x[0].p, 4); }, name};
  if (name == "dV1") return {1, [spec](const Site* x) { return spec.dV(x[0].r); }, name};
  throw config_error("unknown observable '" + name + "'");
}

// Canonical expectation of the named observable; E[V'(r)] = tau by integration by parts.
inline double canonical_value(const std::string& name, const CanonicalParams& cp) {
  if (name == "p1") return 0.0;
  if (name == "e1") return cp.e_bar;
  if (name == "p1^2") return 1.0 / cp.beta;
  if (name == "p1^4") return 3.0 / (cp.beta * cp.beta);
  return cp.tau;
}

inline json run_ensembles(const Config& c, const RunContext& ctx) {
  const auto spec = potential_from(c);
  const auto cp = make_canonical(spec, c.real("thermo.beta"), c.real("thermo.tau"));
  const auto name = c.raw("ensembles.observable");
  MicroOptions opt;
  opt.seed = ctx.seed;
  opt.workers = ctx.workers;
  opt.chains = static_cast<std::size_t>(c.integer("ensembles.chains", 32));
  opt.sweeps = static_cast<std::size_t>(c.integer("ensembles.sweeps", 20000));
  opt.burn_in = static_cast<std::size_t>(c.integer("ensembles.burn_in", 2000));
  const auto curve =
      ensembles_gap_curve(spec, observable_named(name, spec), cp.lambda(), canonical_value(name, cp),
                          c.int_list("ensembles.n"), opt);
  auto j = header(c, Experiment::ensembles, ctx);
  j["observable"] = name;
  j["canonical"] = curve.canonical;
  json res = json::array();
  for (const auto& p : curve.points)
    res.push_back({{"n", p.n}, {"estimate", p.micro.mean}, {"stderr", p.micro.se}, {"gap", p.gap}});
  j["results"] = res;
  j["slope"] = jest(curve.slope, curve.slope_se);
  j["inconclusive"] = curve.inconclusive;
  if (!curve.note.empty()) j["note"] = curve.note;
  return j;
}

inline json run_bg_residual(const Config& c, const RunContext& ctx) {
  const auto spec = potential_from(c);
  const auto cp = make_canonical(spec, c.real("thermo.beta"), c.real("thermo.tau"));
  const auto modes = c.modes("bg.modes", "sine:0,cosine:0");
  const auto dH = mode_gradient(cp, modes, std::vector<double>(modes.size(), 1.0));
  auto cfg = sim_config_from(c);
  cfg.seed = ctx.seed;
  cfg.replicas = static_cast<std::size_t>(c.integer("run.replicas", 200));
  const double T = c.real("bg.T");
  std::ostringstream os;
  os << std::setprecision(17) << "N,estimate,stderr\n";
  json res = json::array();
  std::vector<Estimate> est;
  for (auto N : c.int_list("bg.N")) {
    const auto e = bg_residual_variance(cp, N, cfg, dH, T, ctx.workers);
    est.push_back(e);
    os << N << ',' << e.mean << ',' << e.se << '\n';
    res.push_back({{"N", N}, {"estimate", e.mean}, {"stderr", e.se}});
  }
  write_text(ctx.out / "bg_residual.csv", os.str());
  auto j = header(c, Experiment::bg_residual, ctx);
  j["T"] = T;
  j["replicas"] = cfg.replicas;
  j["results"] = res;
  bool dec = true;
  for (std::size_t k = 0; k + 1 < est.size(); ++k) dec = dec && est[k + 1].mean < est[k].mean;
  j["decreasing"] = dec;
  return j;
}

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> out;
};

// Validates, creates the output directory, runs, and writes summary.json there.
inline json run(Experiment e, const Config& c, const Overrides& ov = {}) {
  const auto errs = validate(c, e);
  if (!errs.empty()) throw config_error("invalid config:\n" + Config::join(errs));
  RunContext ctx;
  ctx.seed = ov.seed ? *ov.seed : static_cast<std::uint64_t>(c.integer("run.seed", 1));
  ctx.workers = static_cast<unsigned>(c.integer("run.workers", default_workers()));
  ctx.out = ov.out ? *ov.out : fs::path(c.text("output.dir", (fs::path("runs") / c.stem()).string()));
  fs::create_directories(ctx.out);
  json j;
  switch (e) {
    case Experiment::thermo: j = run_thermo(c, ctx); break;
    case Experiment::simulate: j = run_simulate(c, ctx); break;
    case Experiment::modes: j = run_modes(c, ctx); break;
    case Experiment::euler: j = run_euler(c, ctx); break;
    case Experiment::gap: j = run_gap(c, ctx); break;
    case Experiment::ensembles: j = run_ensembles(c, ctx); break;
    case Experiment::bg_residual: j = run_bg_residual(c, ctx); break;
  }
  write_text(ctx.out / "summary.json", j.dump(2) + "\n");
  return j;
}

}  // namespace ochain::cli

#endif
