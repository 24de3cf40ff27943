#include <CLI11.hpp>

#include <iostream>

#include "biosense/errors.hpp"
#include "biosense/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Biosensor-array simulation and estimation"};
  app.require_subcommand(1);

  std::string config_path;
  biosense::CommandOverrides ov;
  std::string out, mode;
  std::uint64_t seed = 0;
  int trials = 0;

  struct Entry {
    const char* name;
    const char* help;
    void (*run)(const biosense::ExperimentConfig&);
  };
  const Entry entries[] = {
      {"simulate-ode", "Multi-compartment trajectories per sensor", biosense::cmd_simulate_ode},
      {"simulate-pde", "Finite-difference reference solution", biosense::cmd_simulate_pde},
      {"compare", "Normalized ODE/PDE error per sensor", biosense::cmd_compare},
      {"estimate", "Fit A1 and report variance analysis", biosense::cmd_estimate},
      {"design", "H-curve, super-1/N interval and N*", biosense::cmd_design},
  };
  std::vector<std::pair<CLI::App*, const Entry*>> subs;
  for (const auto& e : entries) {
    auto* sub = app.add_subcommand(e.name, e.help);
    sub->add_option("--config", config_path, "YAML experiment configuration")->required();
    sub->add_option("--out", out, "output directory");
    sub->add_option("--seed", seed, "master seed");
    sub->add_option("--trials", trials, "Monte Carlo trials");
    sub->add_option("--mode", mode, "advection scheme")->check(CLI::IsMember({"strict", "relaxed"}));
    subs.emplace_back(sub, &e);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  for (const auto& [sub, entry] : subs) {
    if (!sub->parsed()) continue;
    try {
      auto cfg = biosense::load_config(config_path);
      if (sub->count("--out")) ov.out = out;
      if (sub->count("--seed")) ov.seed = seed;
      if (sub->count("--trials")) ov.trials = trials;
      if (sub->count("--mode"))
        ov.mode = mode == "strict" ? biosense::AdvectionMode::Strict : biosense::AdvectionMode::Relaxed;
      biosense::apply_overrides(cfg, ov);
      cfg.validate();
      for (const auto& w : cfg.chamber.warnings()) std::cerr << "warning: " << w << "\n";
      entry->run(cfg);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return biosense::exit_code_for(e);
    }
  }
  return 0;
}
