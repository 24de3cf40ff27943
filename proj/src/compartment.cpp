#include "biosense/compartment.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "biosense/errors.hpp"
#include "biosense/runge_kutta.hpp"

namespace biosense {

namespace {

constexpr double kScaleFloor = 1e-30;

double species_scale(const SurfaceChemistry& chem) {
  double s = 0.0;
  for (double v : chem.initial_state()) s = std::max(s, std::abs(v));
  return std::max(s, kScaleFloor);
}

}  // namespace

std::vector<double> uniform_grid(double horizon, double dt) {
  if (!(dt > 0.0) || !(horizon >= 0.0)) throw DomainError("sample grid needs dt > 0 and horizon >= 0");
  const auto count = static_cast<std::size_t>(std::floor(horizon / dt * (1.0 + 1e-9) + 1e-9)) + 1;
  std::vector<double> t(count);
  for (std::size_t k = 0; k < count; ++k) t[k] = static_cast<double>(k) * dt;
  return t;
}

CompartmentModel::CompartmentModel(ChamberConfig cfg, std::shared_ptr<const SurfaceChemistry> chem,
                                   CompartmentOptions opts)
    : cfg_(cfg), chem_(std::move(chem)), opts_(opts) {
  if (!chem_) throw ConfigError("compartment model needs a chemistry");
  cfg_.validate();
  h0_ = inner_height(cfg_);
  if (opts_.alpha_override) {
    alpha_ = *opts_.alpha_override;
    if (!(alpha_ > 0.0 && alpha_ <= 1.0)) throw RegimeError("alpha override must lie in (0, 1]");
  } else {
    alpha_ = depletion_factor(cfg_);
  }
  arrivals_ = arrival_times(cfg_);
}

double CompartmentModel::outer_concentration(int sensor, double A1) const {
  return std::pow(alpha_, sensor) * A1;
}

BlockSolution CompartmentModel::solve_block(double outer, std::span<const double> local_times,
                                            bool with_sensitivity) const {
  if (!(outer >= 0.0)) throw DomainError("outer concentration must be >= 0");
  const SurfaceChemistry& chem = *chem_;
  const std::size_t m = chem.species_count();
  const std::size_t n = 1 + m;
  const std::size_t dim = with_sensitivity ? 2 * n : n;
  const double gamma = cfg_.diffusivity;
  const double h0 = h0_;
  const double k_mt = gamma / h0;  // mass-transfer coefficient
  const auto q = chem.capture_vector();
  const auto p = chem.release_vector();
  const std::size_t ridx = chem.response_index();

  std::vector<double> y(dim, 0.0);
  const auto u0 = chem.initial_state();
  std::copy(u0.begin(), u0.end(), y.begin() + 1);

  std::vector<double> jac(m * m), dG_dA(m);

  auto rhs = [&](double, std::span<const double> s, std::span<double> ds) {
    const double a = s[0];
    const auto u = s.subspan(1, m);
    double qu = 0.0, pu = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      qu += q[i] * u[i];
      pu += p[i] * u[i];
    }
    ds[0] = (k_mt * (outer - a) - (a * qu - pu)) / h0;
    chem.derivative(u, a, ds.subspan(1, m));
    if (!with_sensitivity) return;
    // Forward sensitivities with respect to the outer concentration.
    const double sa = s[n];
    const auto su = s.subspan(n + 1, m);
    double dR_du_su = 0.0;
    for (std::size_t i = 0; i < m; ++i) dR_du_su += (a * q[i] - p[i]) * su[i];
    ds[n] = (k_mt * (1.0 - sa) - (qu * sa + dR_du_su)) / h0;
    chem.jacobian(u, a, jac, dG_dA);
    for (std::size_t i = 0; i < m; ++i) {
      double acc = dG_dA[i] * sa;
      for (std::size_t j = 0; j < m; ++j) acc += jac[i * m + j] * su[j];
      ds[n + 1 + i] = acc;
    }
  };

  const double a_scale = std::max(outer, kScaleFloor);
  const double u_scale = species_scale(chem);
  ode::StepOptions step;
  step.rtol = opts_.rtol;
  step.atol.assign(dim, 0.0);
  step.atol[0] = opts_.atol_factor * a_scale;
  for (std::size_t i = 1; i < n; ++i) step.atol[i] = opts_.atol_factor * u_scale;
  if (with_sensitivity) {
    const double a_ref = outer > 0.0 ? outer : 1e-12;
    step.atol[n] = opts_.atol_factor;
    for (std::size_t i = n + 1; i < dim; ++i) step.atol[i] = opts_.atol_factor * u_scale / a_ref;
  }

  BlockSolution out;
  out.inner.reserve(local_times.size());
  out.species.reserve(local_times.size());
  out.response.reserve(local_times.size());
  if (with_sensitivity) out.sensitivity.reserve(local_times.size());

  auto record = [&](double, std::span<const double> s) {
    out.inner.push_back(s[0]);
    out.species.emplace_back(s.begin() + 1, s.begin() + 1 + static_cast<std::ptrdiff_t>(m));
    out.response.push_back(chem.response(s.subspan(1, m)));
    if (with_sensitivity) out.sensitivity.push_back(s[n + 1 + ridx]);
  };

  const double t_end = local_times.empty() ? 0.0 : local_times.back();
  if (!local_times.empty() && local_times.front() < 0.0) {
    throw DomainError("local sample times must be >= 0");
  }
  ode::integrate(ode::dormand_prince54(), rhs, 0.0, y, t_end, local_times, record, step);
  if (out.response.size() != local_times.size()) {
    throw NumericError("integrator did not reach every sample time (unsorted sample grid?)");
  }
  return out;
}

std::vector<double> CompartmentModel::response(double outer,
                                               std::span<const double> local_times) const {
  return solve_block(outer, local_times, false).response;
}

std::vector<double> CompartmentModel::sensitivity(double outer,
                                                  std::span<const double> local_times) const {
  return solve_block(outer, local_times, true).sensitivity;
}

std::vector<double> CompartmentModel::sensor_response(int sensor, double A1,
                                                      std::span<const double> times) const {
  if (sensor < 0 || sensor >= cfg_.sensor_count) throw DomainError("sensor index out of range");
  const double ti = arrivals_[static_cast<std::size_t>(sensor)];
  std::vector<double> local;
  std::size_t first_after = times.size();
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (times[k] > ti) {
      first_after = k;
      break;
    }
  }
  for (std::size_t k = first_after; k < times.size(); ++k) local.push_back(times[k] - ti);
  const double g0 = chem_->response(chem_->initial_state());
  std::vector<double> out(times.size(), g0);
  if (!local.empty()) {
    const auto g = response(outer_concentration(sensor, A1), local);
    std::copy(g.begin(), g.end(), out.begin() + static_cast<std::ptrdiff_t>(first_after));
  }
  return out;
}

CompartmentTrajectory CompartmentModel::simulate_array(double A1, double horizon,
                                                       double sample_dt) const {
  if (!(A1 >= 0.0)) throw DomainError("inlet concentration A1 must be >= 0");
  if (!(horizon > arrivals_.back())) {
    std::ostringstream os;
    os << "horizon " << horizon << " s must exceed the last arrival time " << arrivals_.back()
       << " s";
    throw DomainError(os.str());
  }
  CompartmentTrajectory traj;
  traj.h0 = h0_;
  traj.alpha = alpha_;
  for (int i = 0; i < cfg_.sensor_count; ++i) {
    const double ti = arrivals_[static_cast<std::size_t>(i)];
    const auto local = uniform_grid(horizon - ti, sample_dt);
    SensorTrajectory st;
    st.sensor = i;
    st.arrival = ti;
    st.outer = outer_concentration(i, A1);
    BlockSolution sol;
    try {
      sol = solve_block(st.outer, local, false);
    } catch (const ode::StepFailure& e) {
      std::ostringstream os;
      os << "sensor " << i + 1 << ": integration failed at t = " << ti + e.time << " s ("
         << e.what() << ")";
      throw NumericError(os.str());
    }
    st.time.resize(local.size());
    for (std::size_t k = 0; k < local.size(); ++k) st.time[k] = ti + local[k];
    st.inner = std::move(sol.inner);
    st.species = std::move(sol.species);
    st.response = std::move(sol.response);
    traj.sensors.push_back(std::move(st));
  }
  return traj;
}

CompartmentTrajectory simulate_array(const ChamberConfig& cfg,
                                     std::shared_ptr<const SurfaceChemistry> chem, double A1,
                                     double horizon, double sample_dt,
                                     const CompartmentOptions& opts) {
  return CompartmentModel(cfg, std::move(chem), opts).simulate_array(A1, horizon, sample_dt);
}

std::vector<double> response_sensitivity(const ChamberConfig& cfg,
                                         std::shared_ptr<const SurfaceChemistry> chem, double A,
                                         std::span<const double> local_times,
                                         const CompartmentOptions& opts) {
  if (!(A >= 0.0)) throw DomainError("concentration must be >= 0");
  return CompartmentModel(cfg, std::move(chem), opts).sensitivity(A, local_times);
}

}  // namespace biosense
