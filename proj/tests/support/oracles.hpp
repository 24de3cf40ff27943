#pragma once

// Independent reference computations shared by the unit and acceptance tests.

#include <cmath>
#include <span>
#include <vector>

#include "biosense/chamber.hpp"
#include "biosense/kinetics.hpp"
#include "biosense/runge_kutta.hpp"

namespace oracle {

using namespace biosense;

/// Detailed-balance equilibrium of the ICS network at bulk concentration A,
/// with the moiety totals of u0. Complexes follow from (B, C, S); C is a
/// scalar root.
inline SpeciesVector equilibrium(const RateConstants& k, const SpeciesVector& u0, double A) {
  const double Bt = u0.b() + u0.w() + u0.y();
  const double Ct = u0.c() + u0.x() + u0.y() + u0.d() + u0.z();
  const double St = u0.s() + u0.d() + u0.z();
  auto K = [&](int j) { return k.f(j) / k.r(j); };
  auto state = [&](double c) {
    SpeciesVector u;
    const double b = Bt / (1.0 + K(1) * A + K(1) * K(3) * A * c);
    const double s = St / (1.0 + K(5) * c * (1.0 + K(6) * A));
    u[Species::B] = b;
    u[Species::C] = c;
    u[Species::S] = s;
    u[Species::W] = K(1) * A * b;
    u[Species::X] = K(2) * A * c;
    u[Species::Y] = K(3) * u[Species::W] * c;
    u[Species::D] = K(5) * c * s;
    u[Species::Z] = K(6) * A * u[Species::D];
    return u;
  };
  double lo = 0.0, hi = Ct;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const auto u = state(mid);
    const double total = u.c() + u.x() + u.y() + u.d() + u.z();
    (total > Ct ? hi : lo) = mid;
  }
  return state(0.5 * (lo + hi));
}

/// All sensors of the multi-compartment model integrated together in
/// absolute time. A sensor's block is frozen at (0, u0) until its arrival.
struct GlobalArray {
  std::vector<double> times;
  std::vector<std::vector<double>> dimer;  // [sensor][sample]
  std::vector<std::vector<double>> inner;
};

inline GlobalArray integrate_global(const SurfaceChemistry& chem, double h0, double gamma,
                                    double alpha, std::span<const double> arrivals, double A1,
                                    std::span<const double> times, double rtol = 1e-11) {
  const std::size_t N = arrivals.size();
  const std::size_t m = chem.species_count();
  const std::size_t blk = m + 1;
  const auto u0 = chem.initial_state();
  const auto q = chem.capture_vector();
  const auto p = chem.release_vector();
  std::vector<double> outer(N);
  for (std::size_t i = 0; i < N; ++i) outer[i] = A1 * std::pow(alpha, static_cast<double>(i));

  std::vector<double> y(N * blk, 0.0);
  double uscale = 0.0;
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t s = 0; s < m; ++s) {
      y[i * blk + 1 + s] = u0[s];
      uscale = std::max(uscale, u0[s]);
    }
  std::vector<double> atol(y.size());
  for (std::size_t i = 0; i < N; ++i) {
    atol[i * blk] = 1e-16 * std::max(outer[i], 1e-30);
    for (std::size_t s = 0; s < m; ++s) atol[i * blk + 1 + s] = 1e-16 * uscale;
  }

  GlobalArray out;
  out.dimer.assign(N, {});
  out.inner.assign(N, {});
  const std::size_t d = chem.response_index();

  std::size_t active = 0;
  auto f = [&](double, std::span<const double> s, std::span<double> ds) {
    std::fill(ds.begin(), ds.end(), 0.0);
    for (std::size_t i = 0; i < active; ++i) {
      const double a = s[i * blk];
      const auto u = s.subspan(i * blk + 1, m);
      double R = 0.0;
      for (std::size_t c = 0; c < m; ++c) R += (a * q[c] - p[c]) * u[c];
      ds[i * blk] = (gamma / h0 * (outer[i] - a) - R) / h0;
      chem.derivative(u, a, ds.subspan(i * blk + 1, m));
    }
  };
  auto record = [&](double t, std::span<const double> s) {
    out.times.push_back(t);
    for (std::size_t i = 0; i < N; ++i) {
      out.dimer[i].push_back(s[i * blk + 1 + d]);
      out.inner[i].push_back(s[i * blk]);
    }
  };

  ode::StepOptions opt;
  opt.rtol = rtol;
  opt.atol = atol;
  // one segment per activation
  std::vector<double> cuts(arrivals.begin(), arrivals.end());
  cuts.push_back(times.back());
  double t0 = 0.0;
  std::size_t next = 0;
  for (double t1 : cuts) {
    std::vector<double> seg;
    while (next < times.size() && (times[next] < t1 || (t1 == cuts.back() && times[next] <= t1))) {
      if (times[next] >= t0) seg.push_back(times[next]);
      ++next;
    }
    if (t1 > t0) ode::integrate(ode::dormand_prince54(), f, t0, y, t1, seg, record, opt);
    else for (double t : seg) record(t, y);
    t0 = t1;
    if (active < N) ++active;
  }
  return out;
}

}  // namespace oracle

namespace oracle {

/// Chamber short enough that P = 64 satisfies dy < gamma / v_bar.
inline biosense::ChamberConfig tiny_chamber() {
  biosense::ChamberConfig c;
  c.length = 4e-6;
  c.height = 1e-5;
  c.sensor_count = 2;
  c.sensor_length = 1e-6;
  c.sensor_spacing = 0.5e-6;
  c.lead_position = 0.5e-6;
  return c;
}

}  // namespace oracle
