#pragma once

// Method-of-lines finite-difference solver for the advection-diffusion
// equation in the (y, z) chamber cross-section with reactive sensor floors.

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "biosense/chamber.hpp"
#include "biosense/kinetics.hpp"
#include "biosense/runge_kutta.hpp"

namespace biosense {

enum class AdvectionMode {
  /// Forward difference -v (A_{i+1} - A_i) / dy; positivity needs dy < gamma / v_bar.
  Strict,
  /// Upwind difference -v (A_i - A_{i-1}) / dy; positive for any dy.
  Relaxed,
};

struct GridSpec {
  int P = 0;  // steps along y
  int Q = 0;  // steps along z
  double dy = 0.0;
  double dz = 0.0;
  AdvectionMode mode = AdvectionMode::Strict;
  /// Per sensor, the sorted node indices i (1 <= i <= P-1) with i dy on the sensor.
  std::vector<std::vector<int>> sensor_nodes;
};

/// Smallest P with l / P < gamma / v_bar.
int minimal_strict_steps(const ChamberConfig& cfg);

/// Throws ConfigError for P, Q < 4, for empty or overlapping sensor node
/// sets, and (strict mode) for dy >= gamma / v_bar.
GridSpec build_grid(const ChamberConfig& cfg, int P, int Q,
                    AdvectionMode mode = AdvectionMode::Strict);

/// Snapshot of the discrete solution with ghost rows filled in by the
/// boundary closures.
struct PdeField {
  int P = 0;
  int Q = 0;
  double t = 0.0;
  std::vector<double> A;  // (P+1) x (Q+1), row-major in i
  /// U[k][n] is the species vector at node sensor_nodes[k][n].
  std::vector<std::vector<std::vector<double>>> U;

  double at(int i, int j) const { return A[static_cast<std::size_t>(i) * (Q + 1) + j]; }
};

struct PdeOptions {
  double rtol = 1e-6;
  /// Absolute tolerance relative to A1 for the bulk and to max(u0) for species.
  double atol_factor = 1e-9;
  /// dt <= cfl * min(dy, dz)^2 / (2 gamma).
  double cfl = 0.4;
  bool keep_snapshots = false;
};

struct PdeRun {
  std::vector<double> times;
  std::vector<std::vector<double>> dimer;  // [sensor][sample], surface mean of D
  std::vector<PdeField> snapshots;
  double min_bulk = 0.0;
  double min_surface = 0.0;
  /// A component fell below -1e-12 times its scale at some accepted step.
  bool positivity_violation = false;
  ode::Stats stats;
};

class PdeSolver {
 public:
  PdeSolver(ChamberConfig cfg, GridSpec grid, std::shared_ptr<const SurfaceChemistry> chem,
            double inlet_concentration);

  const GridSpec& grid() const { return grid_; }
  const ChamberConfig& chamber() const { return cfg_; }
  const SurfaceChemistry& chemistry() const { return *chem_; }
  double inlet() const { return A1_; }

  std::size_t bulk_size() const { return bulk_size_; }
  std::size_t surface_node_count() const { return surface_i_.size(); }
  std::size_t state_size() const;
  /// Index of A_{i,j} in the state, 1 <= i <= P-1, 1 <= j <= Q-1.
  std::size_t bulk_index(int i, int j) const {
    return static_cast<std::size_t>(i - 1) * static_cast<std::size_t>(grid_.Q - 1) +
           static_cast<std::size_t>(j - 1);
  }
  /// Offset of the species block of surface node i, or -1 off the sensors.
  long surface_offset(int i) const { return surface_offset_[static_cast<std::size_t>(i)]; }

  /// Empty chamber (A = 0) and u = u0 on every sensor node.
  std::vector<double> initial_state() const;

  std::vector<double> pack(const PdeField& field) const;
  PdeField unpack(std::span<const double> y, double t) const;

  /// A_{i,0} from the floor closure.
  double wall_value(std::span<const double> y, int i) const;

  /// Semi-discrete right-hand side. Throws NumericError naming the node when
  /// a derivative is not finite.
  void rhs(std::span<const double> y, std::span<double> dy) const;

  /// w [sum A dy dz + sum (W+X+Y+Z) dy], the discrete analyte content.
  double mass(std::span<const double> y) const;
  /// Net rate at which analyte enters through the inlet and outlet faces,
  /// the exact discrete counterpart of d(mass)/dt.
  double boundary_flux(std::span<const double> y) const;

  /// Surface mean of the response per sensor.
  std::vector<double> response_means(std::span<const double> y) const;

  double max_step(const PdeOptions& opt) const;

  /// Samples at k * sample_dt for k = 0.. up to the horizon. `on_step` sees
  /// every accepted state.
  PdeRun integrate(std::vector<double> y0, double horizon, double sample_dt,
                   const PdeOptions& opt = {},
                   const std::function<void(double, std::span<const double>)>& on_step = {}) const;

 private:
  ChamberConfig cfg_;
  GridSpec grid_;
  std::shared_ptr<const SurfaceChemistry> chem_;
  double A1_;
  std::size_t m_;
  std::size_t bulk_size_;
  std::vector<int> surface_i_;         // node i of each surface block
  std::vector<long> surface_offset_;   // size P+1
  std::vector<double> adv_;            // v(j) / dy, size Q+1
  std::vector<double> q_, p_;
};

/// P_e(z) = (L/h) Z (1 - Z) / p with Z = z/h and p = gamma / (4 h v_bar).
double peclet(const ChamberConfig& cfg, double z);

}  // namespace biosense
