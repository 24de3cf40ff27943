#include "biosense/estimation.hpp"

#include <algorithm>
#include <atomic>
#include <boost/math/tools/minima.hpp>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "biosense/errors.hpp"

namespace biosense {

std::vector<double> Schedule::local_times() const {
  if (samples < 1 || !(dt > 0.0)) throw DomainError("schedule needs samples >= 1 and dt > 0");
  std::vector<double> t(static_cast<std::size_t>(samples));
  for (int k = 0; k < samples; ++k) t[static_cast<std::size_t>(k)] = (k + 1) * dt;
  return t;
}

NoiseModel gaussian_noise() {
  return [](std::mt19937_64& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); };
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(master) ^ index);
}

double sigma_from_snr(double D0, double snr_db) { return D0 * std::pow(10.0, -snr_db / 20.0); }

std::vector<std::vector<double>> clean_responses(const CompartmentModel& model, double A_star,
                                                 int N, const Schedule& schedule) {
  if (N < 1 || N > model.sensor_count()) throw DomainError("sensor count out of range");
  const auto local = schedule.local_times();
  std::vector<std::vector<double>> out;
  for (int i = 0; i < N; ++i) out.push_back(model.response(model.outer_concentration(i, A_star), local));
  return out;
}

MeasurementSet add_noise(std::vector<std::vector<double>> clean, std::vector<double> arrivals,
                         std::vector<double> local_times, double sigma, std::uint64_t seed,
                         const NoiseModel& noise) {
  if (!(sigma >= 0.0)) throw DomainError("noise sigma must be >= 0");
  MeasurementSet m;
  m.arrivals = std::move(arrivals);
  m.local_times = std::move(local_times);
  m.values = std::move(clean);
  m.sigma = sigma;
  m.seed = seed;
  if (sigma > 0.0) {
    std::mt19937_64 rng(seed);
    for (auto& row : m.values)
      for (double& v : row) v += sigma * noise(rng);
  }
  return m;
}

MeasurementSet synthesize_measurements(const CompartmentModel& model, double A_star, int N,
                                       const Schedule& schedule, double sigma, std::uint64_t seed,
                                       const NoiseModel& noise) {
  auto clean = clean_responses(model, A_star, N, schedule);
  std::vector<double> arrivals(model.arrivals().begin(), model.arrivals().begin() + N);
  return add_noise(std::move(clean), std::move(arrivals), schedule.local_times(), sigma, seed, noise);
}

MeasurementSet synthesize_from_series(std::span<const double> series_times,
                                      const std::vector<std::vector<double>>& series,
                                      std::span<const double> arrivals, const Schedule& schedule,
                                      double sigma, std::uint64_t seed, const NoiseModel& noise) {
  if (series.size() < arrivals.size()) throw DomainError("fewer series than sensors");
  if (series_times.size() < 2) throw DomainError("series needs at least two samples");
  const auto local = schedule.local_times();
  std::vector<std::vector<double>> clean;
  for (std::size_t i = 0; i < arrivals.size(); ++i) {
    if (series[i].size() != series_times.size()) throw DomainError("series length mismatch");
    std::vector<double> row;
    for (double tk : local) {
      const double t = arrivals[i] + tk;
      if (t < series_times.front() || t > series_times.back()) {
        std::ostringstream os;
        os << "sample time " << t << " s of sensor " << i + 1 << " lies outside the series ["
           << series_times.front() << ", " << series_times.back() << "] s";
        throw DomainError(os.str());
      }
      auto it = std::lower_bound(series_times.begin(), series_times.end(), t);
      const auto hi = static_cast<std::size_t>(it - series_times.begin());
      if (series_times[hi] == t) {
        row.push_back(series[i][hi]);
        continue;
      }
      const std::size_t lo = hi - 1;
      const double w = (t - series_times[lo]) / (series_times[hi] - series_times[lo]);
      row.push_back((1.0 - w) * series[i][lo] + w * series[i][hi]);
    }
    clean.push_back(std::move(row));
  }
  return add_noise(std::move(clean), std::vector<double>(arrivals.begin(), arrivals.end()), local,
                   sigma, seed, noise);
}

double nls_objective(const CompartmentModel& model, const MeasurementSet& meas, double A1) {
  const int N = meas.sensors();
  if (N < 1 || meas.local_times.empty()) throw DomainError("empty measurement set");
  if (N > model.sensor_count()) throw DomainError("more measured sensors than modelled");
  double acc = 0.0;
  for (int i = 0; i < N; ++i) {
    const auto g = model.response(model.outer_concentration(i, A1), meas.local_times);
    const auto& m = meas.values[static_cast<std::size_t>(i)];
    for (std::size_t k = 0; k < g.size(); ++k) {
      const double r = m[k] - g[k];
      acc += r * r;
    }
  }
  return acc / static_cast<double>(meas.local_times.size());
}

EstimateResult nls_estimate(const CompartmentModel& model, const MeasurementSet& meas,
                            const EstimatorOptions& opt) {
  if (!(opt.lower > 0.0) || !(opt.upper > opt.lower)) {
    throw DomainError("estimator bracket needs 0 < lower < upper");
  }
  if (opt.starts < 2) throw DomainError("estimator needs at least two start points");
  EstimateResult res;
  auto J = [&](double x) {
    const double A = std::exp(x);
    const double v = nls_objective(model, meas, A);
    if (opt.keep_trace) res.trace.push_back({A, v});
    return v;
  };
  const double xlo = std::log(opt.lower), xhi = std::log(opt.upper);
  std::vector<double> xs(static_cast<std::size_t>(opt.starts)), fs(xs.size());
  for (std::size_t k = 0; k < xs.size(); ++k) {
    xs[k] = xlo + (xhi - xlo) * static_cast<double>(k) / static_cast<double>(xs.size() - 1);
    fs[k] = J(xs[k]);
  }
  const auto b = static_cast<std::size_t>(std::min_element(fs.begin(), fs.end()) - fs.begin());
  const double a = xs[b == 0 ? 0 : b - 1];
  const double c = xs[std::min(b + 1, xs.size() - 1)];
  const double scale = std::max({std::abs(a), std::abs(c), 1.0});
  const int max_bits = std::numeric_limits<double>::digits / 2;
  const int bits = std::clamp(static_cast<int>(std::ceil(1.0 - std::log2(opt.rel_tol / scale))), 8,
                              max_bits);
  std::uintmax_t iters = 200;
  const auto [x, fx] = boost::math::tools::brent_find_minima(J, a, c, bits, iters);
  double xbest = x, fbest = fx;
  if (fs[b] < fbest) {
    xbest = xs[b];
    fbest = fs[b];
  }
  res.A1_hat = std::exp(xbest);
  res.objective = fbest;
  const double edge_tol = 1e-4;
  res.at_boundary = xbest - xlo < edge_tol || xhi - xbest < edge_tol;
  return res;
}

double h_value(const CompartmentModel& model, double A, const Schedule& schedule) {
  const auto s = model.sensitivity(A, schedule.local_times());
  double acc = 0.0;
  for (double v : s) acc += v * v;
  return acc;
}

double asymptotic_gamma(const CompartmentModel& model, double A_star, int N,
                        const Schedule& schedule) {
  const auto d = variance_approx(model, A_star, 1.0, N, schedule).d;
  double acc = 0.0;
  for (double v : d) acc += v;
  return acc / schedule.samples;
}

VarianceApprox variance_approx(const CompartmentModel& model, double A_star, double sigma, int N,
                               const Schedule& schedule) {
  if (N < 1 || N > model.sensor_count()) throw DomainError("sensor count out of range");
  if (!(A_star >= 0.0)) throw DomainError("A* must be >= 0");
  VarianceApprox out;
  double total = 0.0;
  for (int i = 0; i < N; ++i) {
    const double w = std::pow(model.alpha(), 2 * i);
    const double d = w * h_value(model, model.outer_concentration(i, A_star), schedule);
    out.d.push_back(d);
    total += d;
  }
  if (!(total > 0.0)) {
    throw DegenerateDesignError("all sensor sensitivities d_i vanish; the design carries no information");
  }
  out.sigma2 = sigma * sigma / total;
  return out;
}

std::optional<double> HCurve::A_m() const {
  if (!interval) return std::nullopt;
  return A[interval->first];
}

std::optional<double> HCurve::A_n() const {
  if (!interval) return std::nullopt;
  return A[interval->second];
}

HCurve h_curve(const CompartmentModel& model, std::span<const double> A_grid,
               const Schedule& schedule) {
  for (std::size_t k = 0; k < A_grid.size(); ++k) {
    if (!(A_grid[k] > 0.0) || (k > 0 && !(A_grid[k] > A_grid[k - 1]))) {
      throw DomainError("H-curve grid must be positive and increasing");
    }
  }
  HCurve c;
  c.alpha = model.alpha();
  c.A.assign(A_grid.begin(), A_grid.end());
  c.H.resize(A_grid.size());
  c.scaled.resize(A_grid.size());
  parallel_for(A_grid.size(), default_thread_count(), [&](std::size_t k) {
    c.H[k] = h_value(model, A_grid[k], schedule);
    c.scaled[k] = c.alpha * c.alpha * h_value(model, c.alpha * A_grid[k], schedule);
  });
  std::size_t best_len = 0;
  for (std::size_t k = 0; k < c.A.size();) {
    if (!(c.scaled[k] > c.H[k])) {
      ++k;
      continue;
    }
    std::size_t e = k;
    while (e + 1 < c.A.size() && c.scaled[e + 1] > c.H[e + 1]) ++e;
    if (e - k + 1 > best_len) {
      best_len = e - k + 1;
      c.interval = std::make_pair(k, e);
    }
    k = e + 1;
  }
  return c;
}

std::vector<double> log_grid(double lo, double hi, std::size_t count) {
  if (!(lo > 0.0) || !(hi > lo) || count < 2) throw DomainError("log grid needs 0 < lo < hi, count >= 2");
  std::vector<double> g(count);
  const double a = std::log(lo), b = std::log(hi);
  for (std::size_t k = 0; k < count; ++k)
    g[k] = std::exp(a + (b - a) * static_cast<double>(k) / static_cast<double>(count - 1));
  g.front() = lo;
  g.back() = hi;
  return g;
}

int n_star(double A_m, double A_star, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("n_star needs 0 < alpha < 1");
  if (!(A_m > 0.0)) throw DomainError("n_star needs A_m > 0");
  if (A_m > A_star) throw DomainError("n_star needs A_m <= A*; A* lies below the super-1/N range");
  const double ratio = std::log(A_m / A_star) / std::log(alpha);
  // Absorb rounding when the ratio is an exact integer in exact arithmetic.
  return static_cast<int>(std::floor(ratio + 1e-9)) + 2;
}

unsigned default_thread_count() {
  if (const char* env = std::getenv("BIOSENSE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t count, unsigned threads,
                  const std::function<void(std::size_t)>& body) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(count);
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

MonteCarloResult monte_carlo_variance(const CompartmentModel& model, double A_star, double sigma,
                                      int N, const Schedule& schedule,
                                      const MonteCarloOptions& opt) {
  if (opt.trials < 2) throw DomainError("Monte Carlo needs at least two trials");
  const auto clean = clean_responses(model, A_star, N, schedule);
  const std::vector<double> arrivals(model.arrivals().begin(), model.arrivals().begin() + N);
  const auto local = schedule.local_times();

  MonteCarloResult r;
  r.trials = opt.trials;
  r.estimates.assign(static_cast<std::size_t>(opt.trials), 0.0);
  std::vector<char> boundary(static_cast<std::size_t>(opt.trials), 0);
  const unsigned threads = opt.threads ? opt.threads : default_thread_count();
  parallel_for(static_cast<std::size_t>(opt.trials), threads, [&](std::size_t t) {
    const auto meas = add_noise(clean, arrivals, local, sigma, derive_seed(opt.master_seed, t), opt.noise);
    const auto est = nls_estimate(model, meas, opt.estimator);
    r.estimates[t] = est.A1_hat;
    boundary[t] = est.at_boundary ? 1 : 0;
  });

  double sum = 0.0;
  int used = 0;
  r.boundary.resize(boundary.size());
  for (std::size_t t = 0; t < boundary.size(); ++t) {
    r.boundary[t] = boundary[t] != 0;
    if (r.boundary[t]) {
      ++r.excluded;
      r.estimates[t] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    sum += r.estimates[t];
    ++used;
  }
  if (used < 2) {
    r.mean = r.std = r.std_rel = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  r.mean = sum / used;
  double ss = 0.0;
  for (std::size_t t = 0; t < boundary.size(); ++t) {
    if (r.boundary[t]) continue;
    const double e = r.estimates[t] - r.mean;
    ss += e * e;
  }
  r.std = std::sqrt(ss / (used - 1));
  r.std_rel = A_star > 0.0 ? r.std / A_star : std::numeric_limits<double>::quiet_NaN();
  return r;
}

}  // namespace biosense
