#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "biosense/chamber.hpp"
#include "biosense/errors.hpp"

using namespace biosense;

TEST_CASE("inner height") {
  ChamberConfig cfg;
  // (1e-10 * 1e-4 * 2e-3 / 1.25e-3)^(1/3) / 1.464, by hand
  CHECK(inner_height(cfg) == doctest::Approx(1.721203e-5).epsilon(1e-6));
  CHECK(inner_height(cfg) == doctest::Approx(1.722e-5).epsilon(1e-3));

  auto g8 = cfg;
  g8.diffusivity *= 8;
  CHECK(inner_height(g8) == doctest::Approx(2 * inner_height(cfg)).epsilon(1e-14));
  auto v8 = cfg;
  v8.peak_velocity *= 8;
  CHECK(inner_height(v8) == doctest::Approx(0.5 * inner_height(cfg)).epsilon(1e-14));
}

TEST_CASE("depletion factor") {
  ChamberConfig cfg;
  const double h0 = 1.721203e-5;
  const double oracle = 1.0 - 3.0 * 1e-10 * 2e-3 / (2.0 * h0 * 1.25e-3 * 1e-4);
  CHECK(depletion_factor(cfg) == doctest::Approx(oracle).epsilon(1e-6));
  CHECK(depletion_factor(cfg) == doctest::Approx(0.8606).epsilon(1e-4));
  // The experimental value 0.8173 is not reachable from these parameters.
  CHECK(std::abs(depletion_factor(cfg) - 0.8173) > 0.04);

  auto shortL = cfg;
  shortL.sensor_length = 1e-9;
  CHECK(depletion_factor(shortL) > 0.9999);
  CHECK(depletion_factor(shortL) < 1.0);

  auto slow = cfg;
  slow.peak_velocity = 1e-7;
  CHECK_THROWS_AS(depletion_factor(slow), RegimeError);
  CHECK_THROWS_AS(depletion_factor(slow), ConfigError);
}

TEST_CASE("peak velocity from flow rate") {
  const double Qf = 10e-9 / 60.0;  // 10 uL/min
  CHECK(peak_velocity_from_flow(Qf, 2e-3, 1e-4) == doctest::Approx(1.25e-3).epsilon(1e-14));

  // Q = w * integral of v(z) dz, midpoint rule on the parabola
  ChamberConfig cfg;
  cfg.peak_velocity = peak_velocity_from_flow(Qf, cfg.width, cfg.height);
  const int n = 200000;
  double integral = 0.0;
  for (int k = 0; k < n; ++k) integral += velocity(cfg, (k + 0.5) * cfg.height / n) * cfg.height / n;
  CHECK(cfg.width * integral == doctest::Approx(Qf).epsilon(1e-8));
}

TEST_CASE("velocity profile") {
  ChamberConfig cfg;
  CHECK(velocity(cfg, 0.0) == 0.0);
  CHECK(velocity(cfg, cfg.height) == 0.0);
  CHECK(velocity(cfg, cfg.height / 2) == doctest::Approx(cfg.peak_velocity).epsilon(1e-15));
}

TEST_CASE("arrival times") {
  ChamberConfig cfg;
  const auto t = arrival_times(cfg);
  REQUIRE(t.size() == 4);
  CHECK(t[0] == doctest::Approx(2.4).epsilon(1e-14));
  CHECK(t[1] - t[0] == doctest::Approx(2.4).epsilon(1e-12));
  auto fast = cfg;
  fast.peak_velocity *= 2;
  const auto tf = arrival_times(fast);
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(tf[i] == doctest::Approx(t[i] / 2).epsilon(1e-14));
}

TEST_CASE("sensor placement") {
  ChamberConfig cfg;
  CHECK(cfg.sensor_start(0) == 1e-3);
  CHECK(cfg.sensor_end(0) == doctest::Approx(3e-3));
  CHECK(cfg.sensor_start(1) == doctest::Approx(4e-3));
  CHECK(cfg.sensor_end(3) == doctest::Approx(12e-3));
}

TEST_CASE("validation") {
  ChamberConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.warnings().empty());

  auto bad = cfg;
  bad.height = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.diffusivity = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.sensor_count = 7;  // ends at 21 mm > 20 mm
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.sensor_count = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  auto tall = cfg;
  tall.height = 2e-4;  // h/w = 1/10
  CHECK_NOTHROW(tall.validate());
  CHECK(tall.warnings().size() == 1);
}
