#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "biosense/runge_kutta.hpp"

using namespace biosense;

namespace {

double integrate_decay(const ode::Tableau& tb, double rtol, std::vector<double>& sample_err) {
  std::vector<double> y{1.0};
  std::vector<double> samples;
  for (int k = 0; k <= 50; ++k) samples.push_back(0.1 * k);
  ode::StepOptions opt;
  opt.rtol = rtol;
  opt.atol = {rtol * 1e-3};
  sample_err.clear();
  auto f = [](double, std::span<const double> u, std::span<double> du) { du[0] = -u[0]; };
  ode::integrate(tb, f, 0.0, y, 5.0, samples,
                 [&](double t, std::span<const double> u) {
                   sample_err.push_back(std::abs(u[0] - std::exp(-t)));
                 },
                 opt);
  return std::abs(y[0] - std::exp(-5.0));
}

}  // namespace

TEST_CASE("tableau consistency") {
  for (const ode::Tableau* tb : {&ode::dormand_prince54(), &ode::bogacki_shampine32()}) {
    double sb = 0.0, se = 0.0;
    for (double b : tb->b) sb += b;
    for (double e : tb->e) se += e;
    CHECK(sb == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(std::abs(se) < 1e-15);
    for (int i = 1; i < tb->stages; ++i) {
      double row = 0.0;
      for (double a : tb->a[i]) row += a;
      CHECK(row == doctest::Approx(tb->c[i]).epsilon(1e-14));
    }
  }
}

TEST_CASE("exponential decay with dense output") {
  std::vector<double> errs;
  for (const ode::Tableau* tb : {&ode::dormand_prince54(), &ode::bogacki_shampine32()}) {
    const double end_err = integrate_decay(*tb, 1e-9, errs);
    CHECK(errs.size() == 51);
    CHECK(end_err < 1e-7);
    for (double e : errs) CHECK(e < 1e-7);
  }
}

TEST_CASE("error shrinks with tolerance") {
  std::vector<double> errs;
  const double loose = integrate_decay(ode::dormand_prince54(), 1e-5, errs);
  const double tight = integrate_decay(ode::dormand_prince54(), 1e-10, errs);
  CHECK(tight < loose);
  CHECK(tight < 1e-9);
}

TEST_CASE("harmonic oscillator keeps its energy") {
  std::vector<double> y{1.0, 0.0};
  ode::StepOptions opt;
  opt.rtol = 1e-10;
  opt.atol = {1e-12};
  auto f = [](double, std::span<const double> u, std::span<double> du) {
    du[0] = u[1];
    du[1] = -u[0];
  };
  const std::vector<double> none;
  const double T = 20.0 * M_PI;
  ode::integrate(ode::bogacki_shampine32(), f, 0.0, y, T, none, [](double, auto) {}, opt);
  CHECK(y[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(std::abs(y[1]) < 1e-6);
}

TEST_CASE("max step is honoured and steps are observed") {
  std::vector<double> y{0.0};
  ode::StepOptions opt;
  opt.max_step = 0.01;
  auto f = [](double, std::span<const double>, std::span<double> du) { du[0] = 1.0; };
  const std::vector<double> none;
  double last = 0.0, widest = 0.0;
  const auto stats = ode::integrate(ode::dormand_prince54(), f, 0.0, y, 1.0, none,
                                    [](double, auto) {}, opt,
                                    [&](double t, std::span<const double>) {
                                      widest = std::max(widest, t - last);
                                      last = t;
                                    });
  CHECK(widest <= 0.01 * (1 + 1e-12));
  CHECK(stats.accepted >= 100);
  CHECK(last == doctest::Approx(1.0));
  CHECK(y[0] == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("blow-up raises a step failure") {
  std::vector<double> y{1.0};
  auto f = [](double, std::span<const double> u, std::span<double> du) { du[0] = u[0] * u[0]; };
  const std::vector<double> none;
  CHECK_THROWS_AS(ode::integrate(ode::dormand_prince54(), f, 0.0, y, 2.0, none,
                                 [](double, auto) {}, ode::StepOptions{}),
                  ode::StepFailure);
}
