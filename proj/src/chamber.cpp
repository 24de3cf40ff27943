#include "biosense/chamber.hpp"

#include <cmath>
#include <sstream>

#include "biosense/errors.hpp"

namespace biosense {

namespace {

void require_positive(double value, const char* name) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    std::ostringstream os;
    os << "chamber." << name << " must be a finite positive number (got " << value << ")";
    throw ConfigError(os.str());
  }
}

}  // namespace

void ChamberConfig::validate() const {
  require_positive(height, "height");
  require_positive(length, "length");
  require_positive(width, "width");
  require_positive(sensor_length, "sensor_length");
  require_positive(diffusivity, "diffusivity");
  require_positive(peak_velocity, "peak_velocity");
  if (!(sensor_spacing >= 0.0)) throw ConfigError("chamber.sensor_spacing must be >= 0");
  if (!(lead_position >= 0.0)) throw ConfigError("chamber.lead_position must be >= 0");
  if (sensor_count < 1) throw ConfigError("chamber.sensor_count must be >= 1");
  const double end = sensor_end(sensor_count - 1);
  if (end > length * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "sensor array ends at y = " << end << " m, beyond the chamber length " << length
       << " m";
    throw ConfigError(os.str());
  }
}

std::vector<std::string> ChamberConfig::warnings() const {
  std::vector<std::string> out;
  if (height / width > 1.0 / 20.0) {
    std::ostringstream os;
    os << "height/width = " << height / width
       << " exceeds 1/20; the two-dimensional flow assumption is weak";
    out.push_back(os.str());
  }
  return out;
}

double velocity(const ChamberConfig& cfg, double z) {
  const double s = z / cfg.height;
  return 4.0 * cfg.peak_velocity * s * (1.0 - s);
}

double peak_velocity_from_flow(double flow_rate, double width, double height) {
  return 3.0 * flow_rate / (2.0 * width * height);
}

double inner_height(const ChamberConfig& cfg) {
  cfg.validate();
  return std::cbrt(cfg.diffusivity * cfg.height * cfg.sensor_length / cfg.peak_velocity) / 1.464;
}

double depletion_factor(const ChamberConfig& cfg) {
  const double h0 = inner_height(cfg);
  const double alpha = 1.0 - 3.0 * cfg.diffusivity * cfg.sensor_length /
                                 (2.0 * h0 * cfg.peak_velocity * cfg.height);
  if (!(alpha > 0.0 && alpha < 1.0)) {
    std::ostringstream os;
    os << "depletion factor alpha = " << alpha
       << " is outside (0, 1); the compartment model does not apply. Increase the flow rate "
          "or chamber height, or shorten the sensors";
    throw RegimeError(os.str());
  }
  return alpha;
}

std::vector<double> arrival_times(const ChamberConfig& cfg) {
  cfg.validate();
  std::vector<double> t(static_cast<std::size_t>(cfg.sensor_count));
  for (int i = 0; i < cfg.sensor_count; ++i) t[i] = cfg.sensor_end(i) / cfg.peak_velocity;
  return t;
}

}  // namespace biosense
