#pragma once

// Multi-compartment reduction of the flow-chamber transport problem: every
// sensor is a two-compartment block (depleted inner layer of height h0 over
// the reactive surface, well-mixed outer layer at concentration A_i) with
// A_i = alpha^(i-1) A_1 and the block starting at the arrival time t_i.

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "biosense/chamber.hpp"
#include "biosense/kinetics.hpp"

namespace biosense {

struct CompartmentOptions {
  double rtol = 1e-8;
  /// Absolute tolerance per component is atol_factor times the component's
  /// natural scale (outer concentration for the inner layer, largest u0 entry
  /// for the surface species).
  double atol_factor = 1e-14;
  /// Pins alpha instead of computing it from the geometry.
  std::optional<double> alpha_override;
};

/// Solution of one block in local time (t - t_i) on a caller-chosen grid.
struct BlockSolution {
  std::vector<double> inner;                 // a_bar, mol/m^3
  std::vector<std::vector<double>> species;  // u_bar per sample
  std::vector<double> response;              // g = F(u_bar)
  std::vector<double> sensitivity;           // dg/dA, empty unless requested
};

struct SensorTrajectory {
  int sensor = 0;
  double arrival = 0.0;  // t_i, s
  double outer = 0.0;    // A_i, mol/m^3
  std::vector<double> time;  // absolute times, first entry t_i
  std::vector<double> inner;
  std::vector<std::vector<double>> species;
  std::vector<double> response;
};

struct CompartmentTrajectory {
  double h0 = 0.0;
  double alpha = 0.0;
  std::vector<SensorTrajectory> sensors;
};

class CompartmentModel {
 public:
  CompartmentModel(ChamberConfig cfg, std::shared_ptr<const SurfaceChemistry> chem,
                   CompartmentOptions opts = {});

  const ChamberConfig& chamber() const { return cfg_; }
  const SurfaceChemistry& chemistry() const { return *chem_; }
  std::shared_ptr<const SurfaceChemistry> chemistry_ptr() const { return chem_; }
  const CompartmentOptions& options() const { return opts_; }
  double h0() const { return h0_; }
  double alpha() const { return alpha_; }
  const std::vector<double>& arrivals() const { return arrivals_; }
  int sensor_count() const { return cfg_.sensor_count; }

  /// A_i = alpha^i A1 for the 0-based sensor index i.
  double outer_concentration(int sensor, double A1) const;

  /// Integrates one block driven by `outer` from a_bar = 0, u = u0 and
  /// records it at the sorted, nonnegative local times.
  BlockSolution solve_block(double outer, std::span<const double> local_times,
                            bool with_sensitivity = false) const;

  /// g(A, t) on local times.
  std::vector<double> response(double outer, std::span<const double> local_times) const;

  /// dg(A, t)/dA on local times via the forward sensitivity equations.
  std::vector<double> sensitivity(double outer, std::span<const double> local_times) const;

  /// g_i(A1, t) at absolute times; the response is F(u0) before t_i.
  std::vector<double> sensor_response(int sensor, double A1, std::span<const double> times) const;

  /// All sensors on the uniform grid t_i + k * sample_dt up to `horizon`.
  CompartmentTrajectory simulate_array(double A1, double horizon, double sample_dt) const;

 private:
  ChamberConfig cfg_;
  std::shared_ptr<const SurfaceChemistry> chem_;
  CompartmentOptions opts_;
  double h0_ = 0.0;
  double alpha_ = 0.0;
  std::vector<double> arrivals_;
};

CompartmentTrajectory simulate_array(const ChamberConfig& cfg,
                                     std::shared_ptr<const SurfaceChemistry> chem, double A1,
                                     double horizon, double sample_dt,
                                     const CompartmentOptions& opts = {});

std::vector<double> response_sensitivity(const ChamberConfig& cfg,
                                         std::shared_ptr<const SurfaceChemistry> chem, double A,
                                         std::span<const double> local_times,
                                         const CompartmentOptions& opts = {});

/// k * dt for k = 0.. while k * dt <= horizon (with a relative slack of 1e-9).
std::vector<double> uniform_grid(double horizon, double dt);

}  // namespace biosense
