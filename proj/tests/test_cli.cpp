#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>

#include "experiment.hpp"

using namespace ochain;
using namespace ochain::cli;

namespace {

Config config_of(const std::string& text) {
  std::istringstream in(text);
  return Config::parse(in);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("ochain_cli_" + name);
  fs::remove_all(p);
  return p;
}

bool mentions(const std::vector<std::string>& errs, const std::string& s) {
  for (const auto& e : errs)
    if (e.find(s) != std::string::npos) return true;
  return false;
}

const char* kSimulate =
    "potential.kind = softened-quadratic\n"
    "potential.a = 0.2\n"
    "thermo.beta = 1\n"
    "thermo.tau = 0.3\n"
    "dynamics.N = 8\n"
    "dynamics.t_end = 0.2\n"
    "dynamics.record_every = 0.1\n"
    "run.replicas = 2\n";

}  // namespace

TEST(Config, ShippedSchemaMatchesTheTable) {
  EXPECT_EQ(slurp(fs::path(OCHAIN_SOURCE_DIR) / "configs" / "schema.txt"), schema_text());
}

TEST(Config, ShippedSamplesValidate) {
  for (const auto& entry : fs::directory_iterator(fs::path(OCHAIN_SOURCE_DIR) / "configs")) {
    if (entry.path().extension() != ".cfg") continue;
    const auto c = Config::load(entry.path());
    const auto e = parse_experiment(c.raw("experiment"));
    EXPECT_TRUE(validate(c, e).empty()) << entry.path() << "\n" << Config::join(validate(c, e));
  }
}

TEST(Config, SyntaxErrorsCarryLineNumbers) {
  try {
    config_of("thermo.beta = 1\nthis line has no equals\nthermo.beta = 2\n");
    FAIL();
  } catch (const config_error& e) {
    const std::string m = e.what();
    EXPECT_NE(m.find("<config>:2:"), std::string::npos) << m;
    EXPECT_NE(m.find("thermo.beta"), std::string::npos) << m;
  }
}

TEST(Config, MissingBetaIsNamed) {
  const auto c = config_of("potential.kind = harmonic\nthermo.tau = 0\n");
  const auto errs = validate(c, Experiment::thermo);
  ASSERT_FALSE(errs.empty());
  EXPECT_TRUE(mentions(errs, "thermo.beta"));
  EXPECT_THROW(run(Experiment::thermo, c, {std::nullopt, scratch("missing")}), config_error);
}

TEST(Config, UnknownKeysAndBadValuesAreAllReported) {
  const auto c = config_of(
      "potential.kind = harmonic\nthermo.beta = -1\nthermo.tau = x\nthermo.temperature = 2\n");
  const auto errs = validate(c, Experiment::thermo);
  EXPECT_TRUE(mentions(errs, "thermo.temperature"));
  EXPECT_TRUE(mentions(errs, "thermo.beta"));
  EXPECT_TRUE(mentions(errs, "thermo.tau"));
}

TEST(Config, CrossChecks) {
  EXPECT_TRUE(mentions(validate(config_of("potential.kind = softened-quadratic\nthermo.beta = 1\nthermo.tau = 0\n"),
                                Experiment::thermo),
                       "potential.a"));
  EXPECT_TRUE(mentions(validate(config_of("experiment = gap\npotential.kind = harmonic\nthermo.beta = 1\n"
                                          "thermo.tau = 0\n"),
                                Experiment::thermo),
                       "experiment"));
  const std::string unstable = std::string(kSimulate) + "dynamics.h_micro = 0.5\n";
  EXPECT_TRUE(mentions(validate(config_of(unstable), Experiment::simulate), "stability"));
}

TEST(Thermo, HarmonicFreeEnergy) {
  const auto j = run(Experiment::thermo, config_of("potential.kind = harmonic\nthermo.beta = 1\nthermo.tau = 0\n"),
                     {std::nullopt, scratch("thermo")});
  EXPECT_NEAR(j["G"].get<double>(), std::log(2.0 * std::numbers::pi), 1e-8);
  EXPECT_NEAR(j["e_bar"].get<double>(), 1.0, 1e-8);
  EXPECT_NEAR(j["c"].get<double>(), 1.0, 1e-8);
  for (const char* k : {"beta", "tau", "r_bar", "Sigma", "tau_r", "tau_e", "R", "Q"}) EXPECT_TRUE(j.contains(k)) << k;
}

TEST(Simulate, SameSeedGivesIdenticalFiles) {
  const auto c = config_of(kSimulate);
  const auto a = scratch("sim_a"), b = scratch("sim_b"), d = scratch("sim_d");
  run(Experiment::simulate, c, {5, a});
  run(Experiment::simulate, c, {5, b});
  run(Experiment::simulate, c, {6, d});
  for (const char* f : {"trajectory_r0000.csv", "trajectory_r0001.csv", "summary.json"}) {
    const auto x = slurp(a / f);
    ASSERT_FALSE(x.empty()) << f;
    EXPECT_EQ(x, slurp(b / f)) << f;
  }
  EXPECT_NE(slurp(a / "trajectory_r0000.csv"), slurp(d / "trajectory_r0000.csv"));
  const auto csv = slurp(a / "trajectory_r0000.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "t,site,p,r,e");
  // 3 records of 8 sites plus the header
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 25);
}

TEST(Euler, TableHeaderAndEqualTimeValues) {
  const auto out = scratch("euler");
  run(Experiment::euler,
      config_of("potential.kind = harmonic\nthermo.beta = 2\nthermo.tau = 0\neuler.modes = sine:0\n"
                "euler.t_end = 1\neuler.dt = 0.5\n"),
      {std::nullopt, out});
  std::istringstream csv(slurp(out / "euler.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "t,branch_pair,n,value");
  std::getline(csv, line);
  EXPECT_EQ(line, "0,sine/sine,0,0.5");
}

#ifdef OCHAIN_CLI_BINARY
TEST(Binary, MissingBetaExitsNonzeroNamingTheKey) {
  const auto dir = scratch("binary");
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "bad.cfg");
    f << "potential.kind = harmonic\nthermo.tau = 0\n";
  }
  const std::string cmd = std::string(OCHAIN_CLI_BINARY) + " thermo --config " + (dir / "bad.cfg").string() +
                          " --out " + (dir / "out").string() + " > " + (dir / "log").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  EXPECT_NE(status, 0);
  EXPECT_NE(slurp(dir / "log").find("thermo.beta"), std::string::npos) << slurp(dir / "log");
}
#endif
