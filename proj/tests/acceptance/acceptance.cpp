// Acceptance criteria 1-10. Usage: acceptance [criterion ...]; no argument runs all.
// Prints one PASS/FAIL line per criterion and exits non-zero if any fails.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>
#include <sys/wait.h>

#include "biosense/compartment.hpp"
#include "biosense/estimation.hpp"
#include "biosense/pde.hpp"
#include "oracles.hpp"

using namespace biosense;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

CompartmentModel default_model(CompartmentOptions o = {}) {
  return CompartmentModel(ChamberConfig{}, default_chemistry(), o);
}

double D0() { return default_chemistry()->u0().d(); }

// 1 --------------------------------------------------------------------------
Outcome zero_noise_recovery() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto m = default_model();
  bool ok = true;
  std::string d;
  for (double A : {1e-11, 1e-9, 1e-8}) {
    const auto meas = synthesize_measurements(m, A, 3, Schedule{300, 1.0}, 0.0, 1);
    const auto r = nls_estimate(m, meas);
    const double rel = std::abs(r.A1_hat - A) / A;
    ok = ok && rel <= 1e-5 && !r.at_boundary;
    d += fmt("A*=%.0e rel=%.2e; ", A, rel);
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < 60.0;
  return {ok, d + fmt("runtime %.1f s (< 60 s)", secs)};
}

// 2 --------------------------------------------------------------------------
Outcome ode_pde_agreement() {
  const auto t0 = std::chrono::steady_clock::now();
  const ChamberConfig cfg;
  const auto m = default_model();
  const std::vector<std::pair<int, int>> grids{{100, 10}, {200, 20}, {400, 40}};
  const std::vector<double> concentrations{1e-11, 1e-8};
  const std::vector<double> limits{0.01, 0.10};
  const int N = cfg.sensor_count;
  // maxima[c][g][sensor]
  std::vector<std::vector<std::vector<double>>> maxima(
      concentrations.size(), std::vector<std::vector<double>>(grids.size(), std::vector<double>(N)));
  std::vector<std::pair<std::size_t, std::size_t>> jobs;
  for (std::size_t c = 0; c < concentrations.size(); ++c)
    for (std::size_t g = 0; g < grids.size(); ++g) jobs.emplace_back(c, g);
  std::sort(jobs.begin(), jobs.end(), [](auto a, auto b) { return a.second > b.second; });
  parallel_for(jobs.size(), default_thread_count(), [&](std::size_t k) {
    const auto [c, g] = jobs[k];
    const double A = concentrations[c];
    const PdeSolver s(cfg, build_grid(cfg, grids[g].first, grids[g].second, AdvectionMode::Relaxed),
                      default_chemistry(), A);
    const auto run = s.integrate(s.initial_state(), 1000.0, 1.0);
    for (int i = 0; i < N; ++i) {
      const auto ode = m.sensor_response(i, A, run.times);
      double mx = 0.0;
      for (std::size_t n = 0; n < run.times.size(); ++n)
        mx = std::max(mx, std::abs(run.dimer[i][n] - ode[n]) / run.dimer[i][n]);
      maxima[c][g][i] = mx;
    }
  });
  bool bounded = true, monotone = true;
  std::string d;
  for (std::size_t c = 0; c < concentrations.size(); ++c) {
    d += fmt("A*=%.0e max_t e_i per grid (100x10 | 200x20 | 400x40):", concentrations[c]);
    for (int i = 0; i < N; ++i) {
      d += fmt(" s%d[%.4e %.4e %.4e]", i + 1, maxima[c][0][i], maxima[c][1][i], maxima[c][2][i]);
      bounded = bounded && maxima[c].back()[i] < limits[c];
      for (std::size_t g = 1; g < grids.size(); ++g) {
        const bool shrinks = maxima[c][g][i] < maxima[c][g - 1][i];
        monotone = monotone && shrinks;
        if (!shrinks) d += "(no shrink)";
      }
    }
    d += fmt(" limit %.0f%%; ", 100 * limits[c]);
  }
  const double secs = seconds_since(t0);
  d += fmt("bounded=%s monotone=%s runtime %.0f s (< 900 s)", bounded ? "yes" : "no",
           monotone ? "yes" : "no", secs);
  return {bounded && monotone && secs < 900.0, d};
}

// 3 --------------------------------------------------------------------------
Outcome monte_carlo_vs_analytic() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto m = default_model();
  const Schedule sch{300, 1.0};
  const double A = 1e-8;
  const double sigma = sigma_from_snr(D0(), 10.0);
  bool ok = true;
  std::string d;
  double prev = INFINITY;
  for (int N = 1; N <= 3; ++N) {
    MonteCarloOptions o;
    o.trials = 500;
    o.master_seed = 1000 + N;
    const auto mc = monte_carlo_variance(m, A, sigma, N, sch, o);
    const double an = std::sqrt(variance_approx(m, A, sigma, N, sch).sigma2) / A;
    const double rel = std::abs(mc.std_rel - an) / an;
    ok = ok && rel <= 0.15 && mc.std_rel < prev;
    prev = mc.std_rel;
    d += fmt("N=%d MC %.4f analytic %.4f (dev %.1f%%, excluded %d); ", N, mc.std_rel, an, 100 * rel, mc.excluded);
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < 1800.0;
  return {ok, d + fmt("strictly decreasing=%s; runtime %.0f s", ok ? "yes" : "check", secs)};
}

// 4 --------------------------------------------------------------------------
Outcome super_inverse_n() {
  const auto m = default_model();
  const Schedule sch{300, 1.0};
  const auto curve = h_curve(m, log_grid(1e-11, 1e-6, 51), sch);
  if (!curve.interval) return {false, "h_curve found no interval"};
  const double Am = *curve.A_m(), An = *curve.A_n();
  const double A = 5e-8;
  const bool inside = A >= Am && A <= An;
  const double sigma = sigma_from_snr(D0(), 10.0);
  const double v1 = variance_approx(m, A, sigma, 1, sch).sigma2;
  const double v2 = variance_approx(m, A, sigma, 2, sch).sigma2;
  MonteCarloOptions o;
  o.trials = 500;
  o.master_seed = 4000;
  const double s1 = monte_carlo_variance(m, A, sigma, 1, sch, o).std;
  o.master_seed = 4001;
  const double s2 = monte_carlo_variance(m, A, sigma, 2, sch, o).std;
  const double mc_ratio = (s2 * s2) / (s1 * s1);
  const int ns = inside ? n_star(Am, A, m.alpha()) : 0;
  const bool ok = inside && v2 < 0.5 * v1 && mc_ratio < 0.5 && ns >= 2;
  return {ok, fmt("[A_m, A_n] = [%.3e, %.3e], A* = %.1e; var(N=2)/var(N=1) analytic %.3f, Monte Carlo %.3f "
                  "(< 0.5); n_star = %d (>= 2)",
                  Am, An, A, v2 / v1, mc_ratio, ns)};
}

// 5 --------------------------------------------------------------------------
Outcome sqrt_s_scaling() {
  const auto m = default_model();
  const double A = 1e-8;
  const double sigma = sigma_from_snr(D0(), 10.0);
  MonteCarloOptions o;
  o.trials = 500;
  o.master_seed = 5000;
  const auto a = monte_carlo_variance(m, A, sigma, 1, Schedule{300, 1.0}, o);
  o.master_seed = 5001;
  const auto b = monte_carlo_variance(m, A, sigma, 1, Schedule{1200, 1.0}, o);
  const double ratio = a.std / b.std;
  return {ratio >= 1.7 && ratio <= 2.3,
          fmt("N=1, std/A* at S=300: %.4f, S=1200: %.4f, ratio %.3f in [1.7, 2.3]", a.std_rel, b.std_rel, ratio)};
}

// 6 --------------------------------------------------------------------------
Outcome positivity() {
  const auto cfg = oracle::tiny_chamber();
  const auto grid = build_grid(cfg, 64, 8, AdvectionMode::Strict);
  const PdeSolver s(cfg, grid, default_chemistry(), 1e-8);
  const std::size_t n = s.state_size();
  auto random_state = [&](std::mt19937_64& rng, double zero_prob) {
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::vector<double> y(n);
    for (std::size_t k = 0; k < n; ++k) {
      y[k] = k < s.bulk_size() ? 2e-8 * U(rng) : 4e-13 * U(rng);
      if (U(rng) < zero_prob) y[k] = 0.0;
    }
    return y;
  };

  std::vector<double> mins(200, 0.0);
  std::atomic<int> flagged{0};
  parallel_for(mins.size(), default_thread_count(), [&](std::size_t r) {
    std::mt19937_64 rng(derive_seed(6000, r));
    const auto y0 = random_state(rng, 0.3);
    double mn = INFINITY;
    const auto run = s.integrate(y0, 0.05, 0.01, PdeOptions{}, [&](double, std::span<const double> y) {
      for (double v : y) mn = std::min(mn, v);
    });
    if (run.positivity_violation) ++flagged;
    mins[r] = mn;
  });
  const double worst = *std::min_element(mins.begin(), mins.end());

  std::mt19937_64 rng(6999);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<double> dy(n);
  long bad = 0;
  for (int k = 0; k < 100000; ++k) {
    auto y = random_state(rng, 0.1);
    const std::size_t c = pick(rng);
    y[c] = 0.0;
    s.rhs(y, dy);
    if (dy[c] < 0.0) ++bad;
  }
  const bool ok = worst >= 0.0 && flagged == 0 && bad == 0;
  return {ok, fmt("P=64 (dy=%.3e < gamma/v_bar=%.3e): 200 runs, min component %.3e, flagged %d; "
                  "100000 zeroed-component checks, %ld negative",
                  grid.dy, cfg.diffusivity / cfg.peak_velocity, worst, flagged.load(), bad)};
}

// 7 --------------------------------------------------------------------------
Outcome conservation() {
  const auto sels = moiety_selectors();
  const auto chem = default_chemistry();
  double worst_drift = 0.0, worst_int = 0.0;

  // ODE trajectories
  const auto m = default_model();
  for (double A : {1e-11, 1e-9, 1e-8, 1e-7}) {
    const auto tr = m.simulate_array(A, 1000.0, 0.05);
    for (const auto& s : tr.sensors) {
      const auto u0 = SpeciesVector::from(s.species.front());
      double integral = 0.0;
      auto R = [&](std::size_t k) { return chem->adsorption(s.inner[k], s.species[k]); };
      for (std::size_t k = 0; k < s.time.size(); ++k) {
        const auto u = SpeciesVector::from(s.species[k]);
        for (const auto& sel : sels)
          worst_drift = std::max(worst_drift, std::abs(dot(sel, u) - dot(sel, u0)) / dot(sel, u0));
        if (k) integral += 0.5 * (R(k) + R(k - 1)) * (s.time[k] - s.time[k - 1]);
      }
      const double bound = chem->bound_target(s.species.back()) - chem->bound_target(s.species.front());
      worst_int = std::max(worst_int, std::abs(bound - integral) / std::abs(bound));
    }
  }

  // PDE trajectories, per surface node
  const ChamberConfig cfg;
  for (double A : {1e-11, 1e-8}) {
    const PdeSolver s(cfg, build_grid(cfg, 100, 10, AdvectionMode::Relaxed), chem, A);
    const std::size_t nodes = s.surface_node_count(), m8 = kSpeciesCount;
    const auto y0 = s.initial_state();
    std::vector<double> integral(nodes, 0.0), R_prev(nodes), totals0(3 * nodes), bound0(nodes);
    auto node = [&](std::span<const double> y, std::size_t a) { return y.subspan(s.bulk_size() + a * m8, m8); };
    auto node_i = [&](std::size_t a) {
      int seen = 0;
      for (const auto& v : s.grid().sensor_nodes)
        for (int i : v)
          if (static_cast<std::size_t>(seen++) == a) return i;
      return -1;
    };
    std::vector<int> ids(nodes);
    for (std::size_t a = 0; a < nodes; ++a) ids[a] = node_i(a);
    for (std::size_t a = 0; a < nodes; ++a) {
      R_prev[a] = chem->adsorption(s.wall_value(y0, ids[a]), node(y0, a));
      bound0[a] = chem->bound_target(node(y0, a));
      const auto u = SpeciesVector::from(node(y0, a));
      for (int q = 0; q < 3; ++q) totals0[3 * a + q] = dot(sels[q], u);
    }
    double t_prev = 0.0;
    std::vector<double> last(y0);
    s.integrate(y0, 1000.0, 10.0, PdeOptions{}, [&](double t, std::span<const double> y) {
      for (std::size_t a = 0; a < nodes; ++a) {
        const double R = chem->adsorption(s.wall_value(y, ids[a]), node(y, a));
        integral[a] += 0.5 * (R + R_prev[a]) * (t - t_prev);
        R_prev[a] = R;
        const auto u = SpeciesVector::from(node(y, a));
        for (int q = 0; q < 3; ++q)
          worst_drift = std::max(worst_drift, std::abs(dot(sels[q], u) - totals0[3 * a + q]) / totals0[3 * a + q]);
      }
      t_prev = t;
      last.assign(y.begin(), y.end());
    });
    for (std::size_t a = 0; a < nodes; ++a) {
      const double bound = chem->bound_target(node(last, a)) - bound0[a];
      worst_int = std::max(worst_int, std::abs(bound - integral[a]) / std::abs(bound));
    }
  }
  const bool ok = worst_drift < 1e-9 && worst_int < 1e-4;
  return {ok, fmt("ODE A* in {1e-11,1e-9,1e-8,1e-7} x 4 sensors, PDE 100x10 A* in {1e-11,1e-8} every surface "
                  "node: max moiety drift %.2e (< 1e-9), max |delta(W+X+Y+Z) - int R dt| rel %.2e (< 1e-4)",
                  worst_drift, worst_int)};
}

// 8 --------------------------------------------------------------------------
Outcome sensitivity() {
  const auto m = default_model();
  CompartmentOptions tight;
  tight.rtol = 1e-12;
  tight.atol_factor = 1e-18;
  const auto oracle_model = default_model(tight);
  const std::vector<double> t{5.0, 50.0, 200.0, 800.0};
  double worst = 0.0;
  int points = 0;
  for (double A : {1e-11, 1e-10, 1e-9, 1e-8, 1e-7}) {
    const auto s = m.sensitivity(A, t);
    const double d = 1e-4 * A;
    const auto gp = oracle_model.response(A + d, t);
    const auto gm = oracle_model.response(A - d, t);
    for (std::size_t k = 0; k < t.size(); ++k, ++points) {
      const double fd = (gp[k] - gm[k]) / (2 * d);
      worst = std::max(worst, std::abs(s[k] - fd) / std::abs(fd));
    }
  }
  return {worst <= 1e-4 && points == 20,
          fmt("%d (A, t) points, max relative deviation from central differences %.2e (<= 1e-4)", points, worst)};
}

// 9 --------------------------------------------------------------------------
Outcome reduction_identity() {
  const ChamberConfig cfg;
  const auto m = default_model();
  auto single_cfg = cfg;
  single_cfg.sensor_count = 1;
  const CompartmentModel single(single_cfg, default_chemistry(), CompartmentOptions{.alpha_override = m.alpha()});
  double worst = 0.0, worst_global = 0.0;
  for (double A1 : {1e-11, 1e-9, 1e-8, 1e-7}) {
    const auto tr = m.simulate_array(A1, 1000.0, 1.0);
    for (const auto& s : tr.sensors) {
      std::vector<double> local;
      for (double t : s.time) local.push_back(t - s.arrival);
      const auto blk = single.solve_block(std::pow(m.alpha(), s.sensor) * A1, local);
      for (std::size_t k = 0; k < local.size(); ++k) {
        worst = std::max(worst, std::abs(blk.response[k] - s.response[k]) / blk.response[k]);
        for (std::size_t c = 0; c < kSpeciesCount; ++c)
          worst = std::max(worst, std::abs(blk.species[k][c] - s.species[k][c]) / 4e-13);
      }
    }
    // all sensors integrated together in absolute time
    std::vector<double> times;
    for (double t = 0.0; t <= 1000.0; t += 2.0) times.push_back(t);
    const auto g = oracle::integrate_global(m.chemistry(), m.h0(), cfg.diffusivity, m.alpha(), m.arrivals(), A1, times);
    for (int i = 0; i < m.sensor_count(); ++i) {
      const auto r = m.sensor_response(i, A1, times);
      for (std::size_t k = 0; k < times.size(); ++k)
        worst_global = std::max(worst_global, std::abs(r[k] - g.dimer[i][k]) / g.dimer[i][k]);
    }
  }
  const bool ok = worst < 1e-6 && worst_global < 1e-6;
  return {ok, fmt("array vs shifted single-sensor blocks %.2e, vs global-time coupled integration %.2e (< 1e-6)",
                  worst, worst_global)};
}

// 10 -------------------------------------------------------------------------
Outcome determinism() {
  const auto base = fs::temp_directory_path() / ("biosense_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(base);
  std::vector<std::string> reports;
  for (const char* run : {"a", "b"}) {
    const auto dir = base / run;
    const std::string cmd = std::string(BIOSENSE_CLI) + " estimate --config " + BIOSENSE_SOURCE_DIR +
                            "/config/default.yaml --trials 40 --seed 777 --out " + dir.string() +
                            " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) return {false, "estimate run failed"};
    std::ifstream in(dir / "estimate_report.json", std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    reports.push_back(ss.str());
  }
  fs::remove_all(base);
  const bool ok = !reports[0].empty() && reports[0] == reports[1];
  return {ok, fmt("two estimate runs (40 trials, seed 777): %zu-byte reports, identical=%s", reports[0].size(),
                  ok ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::pair<const char*, std::function<Outcome()>>> criteria{
      {1, {"zero-noise recovery", zero_noise_recovery}},
      {2, {"ODE/PDE agreement", ode_pde_agreement}},
      {3, {"Monte Carlo vs variance approximation", monte_carlo_vs_analytic}},
      {4, {"super-1/N regime", super_inverse_n}},
      {5, {"sqrt(S) scaling", sqrt_s_scaling}},
      {6, {"positivity", positivity}},
      {7, {"conservation", conservation}},
      {8, {"sensitivity correctness", sensitivity}},
      {9, {"reduction identity", reduction_identity}},
      {10, {"determinism", determinism}},
  };
  std::vector<int> selected;
  for (int a = 1; a < argc; ++a) selected.push_back(std::atoi(argv[a]));
  if (selected.empty())
    for (const auto& [k, v] : criteria) selected.push_back(k);

  int failures = 0;
  for (int k : selected) {
    const auto it = criteria.find(k);
    if (it == criteria.end()) {
      std::printf("FAIL criterion %d: unknown criterion\n", k);
      ++failures;
      continue;
    }
    Outcome o;
    try {
      o = it->second.second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", k, it->second.first, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
