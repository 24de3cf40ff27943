#pragma once

// Experiment configuration and the command implementations behind the CLI.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "biosense/chamber.hpp"
#include "biosense/compartment.hpp"
#include "biosense/kinetics.hpp"
#include "biosense/pde.hpp"

namespace biosense {

inline constexpr int kSchemaVersion = 1;

struct ChemistryConfig {
  RateConstants rates = default_rate_constants();
  SurfaceTotals totals;
  MatrixVariant variant = MatrixVariant::Corrected;
};

struct RunConfig {
  double A_star = 1e-8;     // mol/m^3
  double horizon = 1000.0;  // s
  double sample_dt = 1.0;   // s
  int P = 400;
  int Q = 40;
  AdvectionMode mode = AdvectionMode::Relaxed;
  bool snapshots = false;
};

struct EstimationConfig {
  std::optional<double> sigma;   // mol/m^2
  std::optional<double> snr_db;  // used when sigma is absent; default 10 dB
  int samples = 300;
  double dt = 1.0;
  int sensors = 3;
  int trials = 0;
  std::uint64_t master_seed = 1;
  double lower = 1e-13;
  double upper = 1e-5;
  /// Forward model that generates the data: "ode" or "pde".
  std::string source = "ode";
};

struct DesignConfig {
  double A_min = 1e-11;
  double A_max = 1e-6;
  int points = 51;
};

struct OutputConfig {
  std::string directory = "out";
  bool csv = true;
  bool json = true;
};

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  ChamberConfig chamber;
  /// As given in the document, for the report echo.
  std::optional<double> flow_rate_ul_min = 10.0;
  std::optional<double> alpha_override;
  ChemistryConfig chemistry;
  RunConfig run;
  EstimationConfig estimation;
  DesignConfig design;
  OutputConfig outputs;

  std::shared_ptr<IcsChemistry> make_chemistry() const;
  CompartmentOptions compartment_options() const;
  CompartmentModel make_model() const;
  /// sigma, or D0 10^(-SNR/20).
  double noise_sigma() const;
  /// Cross-field checks; throws ConfigError naming the field.
  void validate() const;
};

/// Throws ConfigError with the offending field path.
ExperimentConfig parse_config(const std::string& yaml_text);
ExperimentConfig load_config(const std::filesystem::path& path);

struct CommandOverrides {
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
  std::optional<AdvectionMode> mode;
};

void apply_overrides(ExperimentConfig& cfg, const CommandOverrides& ov);

void cmd_simulate_ode(const ExperimentConfig& cfg);
void cmd_simulate_pde(const ExperimentConfig& cfg);
void cmd_compare(const ExperimentConfig& cfg);
void cmd_estimate(const ExperimentConfig& cfg);
void cmd_design(const ExperimentConfig& cfg);

/// 2 configuration/domain, 3 numeric, 4 degenerate design, 1 otherwise.
int exit_code_for(const std::exception& e);

}  // namespace biosense
