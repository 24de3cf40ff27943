#pragma once

// Least-squares estimation of the inlet concentration from sensor-array
// measurements, asymptotic and finite-sample variance, array design.

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "biosense/compartment.hpp"

namespace biosense {

/// Post-arrival sampling t^k = k dt, k = 1..S, identical for every sensor.
struct Schedule {
  int samples = 300;
  double dt = 1.0;

  std::vector<double> local_times() const;
  double span() const { return samples * dt; }
};

/// Draws one zero-mean, unit-variance noise value.
using NoiseModel = std::function<double(std::mt19937_64&)>;
NoiseModel gaussian_noise();

struct MeasurementSet {
  std::vector<double> arrivals;     // t_i per sensor
  std::vector<double> local_times;  // t^k, shared by all sensors
  std::vector<std::vector<double>> values;  // m_i^k
  double sigma = 0.0;
  std::uint64_t seed = 0;

  int sensors() const { return static_cast<int>(values.size()); }
};

/// Deterministic per-trial seed from (master, index), splitmix64-mixed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

/// sigma = D0 10^(-snr_db / 20).
double sigma_from_snr(double D0, double snr_db);

/// Clean responses g_i(A*, t_i + t^k) from the compartment model for the
/// first N sensors.
std::vector<std::vector<double>> clean_responses(const CompartmentModel& model, double A_star,
                                                 int N, const Schedule& schedule);

/// Adds i.i.d. noise of standard deviation sigma to clean responses.
MeasurementSet add_noise(std::vector<std::vector<double>> clean, std::vector<double> arrivals,
                         std::vector<double> local_times, double sigma, std::uint64_t seed,
                         const NoiseModel& noise = gaussian_noise());

MeasurementSet synthesize_measurements(const CompartmentModel& model, double A_star, int N,
                                       const Schedule& schedule, double sigma, std::uint64_t seed,
                                       const NoiseModel& noise = gaussian_noise());

/// Measurements from a sampled series (e.g. PDE surface means) by linear
/// interpolation in time. Throws DomainError when a sample time t_i + t^k
/// falls outside the series.
MeasurementSet synthesize_from_series(std::span<const double> series_times,
                                      const std::vector<std::vector<double>>& series,
                                      std::span<const double> arrivals, const Schedule& schedule,
                                      double sigma, std::uint64_t seed,
                                      const NoiseModel& noise = gaussian_noise());

struct EstimatorOptions {
  double lower = 1e-13;  // mol/m^3
  double upper = 1e-5;
  int starts = 16;
  /// Relative tolerance of the bracketed minimization in A.
  double rel_tol = 1e-6;
  bool keep_trace = true;
};

struct TracePoint {
  double A;
  double objective;
};

struct EstimateResult {
  double A1_hat = 0.0;
  double objective = 0.0;
  bool at_boundary = false;
  std::vector<TracePoint> trace;
};

/// S^-1 sum_i sum_k (m_i^k - g(alpha^(i-1) A1, t^k))^2.
double nls_objective(const CompartmentModel& model, const MeasurementSet& meas, double A1);

EstimateResult nls_estimate(const CompartmentModel& model, const MeasurementSet& meas,
                            const EstimatorOptions& opt = {});

/// H(A) = sum_k (dg(A, t^k)/dA)^2.
double h_value(const CompartmentModel& model, double A, const Schedule& schedule);

/// S^-1 sum_i alpha^(2i-2) sum_k (dg(alpha^(i-1) A*, t^k)/dA)^2 at finite S.
double asymptotic_gamma(const CompartmentModel& model, double A_star, int N,
                        const Schedule& schedule);

struct VarianceApprox {
  double sigma2 = 0.0;     // sigma^2 / sum d_i
  std::vector<double> d;   // d_i = alpha^(2i-2) H(alpha^(i-1) A*)
};

/// Throws DegenerateDesignError when every d_i is zero.
VarianceApprox variance_approx(const CompartmentModel& model, double A_star, double sigma, int N,
                               const Schedule& schedule);

struct HCurve {
  std::vector<double> A;
  std::vector<double> H;
  std::vector<double> scaled;  // alpha^2 H(alpha A)
  double alpha = 0.0;
  /// Maximal contiguous run of grid points with scaled > H, as indices.
  std::optional<std::pair<std::size_t, std::size_t>> interval;

  std::optional<double> A_m() const;
  std::optional<double> A_n() const;
};

HCurve h_curve(const CompartmentModel& model, std::span<const double> A_grid,
               const Schedule& schedule);

/// Log-spaced grid of `count` points on [lo, hi].
std::vector<double> log_grid(double lo, double hi, std::size_t count);

/// floor(log(A_m / A*) / log(alpha)) + 2.
int n_star(double A_m, double A_star, double alpha);

struct MonteCarloResult {
  int trials = 0;
  int excluded = 0;  // boundary hits
  double mean = 0.0;
  double std = 0.0;
  double std_rel = 0.0;  // std / A*
  std::vector<double> estimates;  // per trial; NaN where excluded
  std::vector<bool> boundary;
};

struct MonteCarloOptions {
  int trials = 500;
  std::uint64_t master_seed = 1;
  /// 0 uses the environment/hardware default.
  unsigned threads = 0;
  EstimatorOptions estimator{.keep_trace = false};
  NoiseModel noise = gaussian_noise();
};

MonteCarloResult monte_carlo_variance(const CompartmentModel& model, double A_star, double sigma,
                                      int N, const Schedule& schedule,
                                      const MonteCarloOptions& opt);

/// Worker count: BIOSENSE_THREADS when set to a positive integer, else the
/// hardware concurrency.
unsigned default_thread_count();

/// Runs body(i) for i in [0, count) on up to `threads` workers.
void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& body);

}  // namespace biosense
