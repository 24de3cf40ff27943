#pragma once

#include <string>
#include <vector>

namespace biosense {

/// Flow chamber and sensor-array geometry in SI units. Sensors are indexed
/// from 0 in code; sensor i spans [sensor_start(i), sensor_end(i)] along the
/// flow direction.
struct ChamberConfig {
  double height = 1e-4;          // h, m
  double length = 2e-2;          // l, m
  double width = 2e-3;           // w, m
  double sensor_length = 2e-3;   // L, m
  double sensor_spacing = 1e-3;  // d, m
  double lead_position = 1e-3;   // leading edge of the first sensor, m
  int sensor_count = 4;          // N
  double diffusivity = 1e-10;    // gamma, m^2/s
  double peak_velocity = 1.25e-3;  // v_bar, m/s

  double sensor_start(int i) const { return lead_position + i * (sensor_length + sensor_spacing); }
  double sensor_end(int i) const { return sensor_start(i) + sensor_length; }

  /// Throws ConfigError on non-positive lengths/constants or an array that
  /// does not fit in the chamber.
  void validate() const;

  /// Non-fatal findings, e.g. height/width above 1/20.
  std::vector<std::string> warnings() const;
};

/// Parabolic profile v(z) = 4 v_bar (z/h)(1 - z/h).
double velocity(const ChamberConfig& cfg, double z);

/// Peak velocity from a volumetric flow rate Q_f (m^3/s): v_bar = 3 Q_f / (2 w h).
double peak_velocity_from_flow(double flow_rate, double width, double height);

/// Height of the depleted inner compartment, (1/1.464) (gamma h L / v_bar)^(1/3).
double inner_height(const ChamberConfig& cfg);

/// Per-sensor depletion of the outer concentration, 1 - 3 gamma L / (2 h0 v_bar h).
/// Throws RegimeError when the result is not in (0, 1).
double depletion_factor(const ChamberConfig& cfg);

/// t_i = y_{i,2} / v_bar, the time the flow reaches the far edge of sensor i.
std::vector<double> arrival_times(const ChamberConfig& cfg);

}  // namespace biosense
