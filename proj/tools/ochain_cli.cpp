#include <CLI11.hpp>

#include <iostream>

#include "experiment.hpp"

int main(int argc, char** argv) {
  using namespace ochain;
  CLI::App app{"Oscillator chain experiments: thermodynamics, dynamics, fluctuation modes, microcanonical sampling"};
  app.require_subcommand(1);
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  for (const auto& [kind, name] : cli::experiment_names()) {
    auto* sub = app.add_subcommand(name, "run the " + name + " experiment");
    sub->add_option("--config", config, "flat key = value config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "master seed, overrides run.seed");
    sub->add_option("--out", out, "output directory, overrides output.dir");
  }
  CLI11_PARSE(app, argc, argv);

  const auto name = app.get_subcommands().front()->get_name();
  try {
    const auto e = cli::parse_experiment(name);
    const auto cfg = cli::Config::load(config);
    cli::Overrides ov;
    ov.seed = seed;
    if (!out.empty()) ov.out = out;
    const auto summary = cli::run(e, cfg, ov);
    if (e == cli::Experiment::thermo) std::cout << summary.dump(2) << "\n";
    else std::cout << "wrote " << (ov.out ? *ov.out : std::filesystem::path(cfg.text("output.dir", "runs/" + cfg.stem()))).string()
                   << "/summary.json\n";
    return 0;
  } catch (const config_error& ex) {
    std::cerr << "ochain " << name << ": " << ex.what() << "\n";
    return 2;
  } catch (const instability_error& ex) {
    std::cerr << "ochain " << name << ": aborted: " << ex.what() << " (last valid t_macro = " << ex.t_macro << ")\n";
    return 3;
  } catch (const std::exception& ex) {
    std::cerr << "ochain " << name << ": error: " << ex.what() << "\n";
    return 1;
  }
}
