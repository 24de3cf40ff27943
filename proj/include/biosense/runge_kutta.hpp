#pragma once

// Embedded explicit Runge-Kutta integration with error control and cubic
// Hermite dense output at caller-supplied sample times.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <sstream>
#include <vector>

#include "biosense/errors.hpp"

namespace biosense::ode {

struct Tableau {
  int stages;
  int order;           // order of the propagated solution
  int embedded_order;  // order of the error estimator
  std::vector<double> c;
  std::vector<std::vector<double>> a;  // a[i][j], j < i
  std::vector<double> b;
  std::vector<double> e;  // b - b_hat
  bool fsal;              // last stage evaluates f(t + h, y_new)
};

inline const Tableau& dormand_prince54() {
  static const Tableau t = [] {
    Tableau tb;
    tb.stages = 7;
    tb.order = 5;
    tb.embedded_order = 4;
    tb.fsal = true;
    tb.c = {0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
    tb.a = {
        {},
        {1.0 / 5},
        {3.0 / 40, 9.0 / 40},
        {44.0 / 45, -56.0 / 15, 32.0 / 9},
        {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
        {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
        {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84},
    };
    tb.b = {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84, 0.0};
    const std::vector<double> bh = {5179.0 / 57600,    0.0,           7571.0 / 16695, 393.0 / 640,
                                    -92097.0 / 339200, 187.0 / 2100,  1.0 / 40};
    tb.e.resize(7);
    for (int i = 0; i < 7; ++i) tb.e[i] = tb.b[i] - bh[i];
    return tb;
  }();
  return t;
}

inline const Tableau& bogacki_shampine32() {
  static const Tableau t = [] {
    Tableau tb;
    tb.stages = 4;
    tb.order = 3;
    tb.embedded_order = 2;
    tb.fsal = true;
    tb.c = {0.0, 0.5, 0.75, 1.0};
    tb.a = {{}, {0.5}, {0.0, 0.75}, {2.0 / 9, 1.0 / 3, 4.0 / 9}};
    tb.b = {2.0 / 9, 1.0 / 3, 4.0 / 9, 0.0};
    const std::vector<double> bh = {7.0 / 24, 1.0 / 4, 1.0 / 3, 1.0 / 8};
    tb.e.resize(4);
    for (int i = 0; i < 4; ++i) tb.e[i] = tb.b[i] - bh[i];
    return tb;
  }();
  return t;
}

struct StepOptions {
  double rtol = 1e-8;
  /// Per-component absolute tolerance; a single entry is broadcast.
  std::vector<double> atol = {1e-14};
  double max_step = std::numeric_limits<double>::infinity();
  double initial_step = 0.0;  // 0 selects a step automatically
  std::size_t max_steps = 50'000'000;
};

struct Stats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t rhs_evals = 0;
};

/// Raised when the step size collapses or the state becomes non-finite.
class StepFailure : public NumericError {
 public:
  StepFailure(const std::string& what, double t) : NumericError(what), time(t) {}
  double time;
};

struct NoStepObserver {
  void operator()(double, std::span<const double>) const {}
};

/// Integrates y' = f(t, y) from t0 to t_end. `f(t, y, dy)` writes the
/// derivative; `on_sample(t, y)` is called for every entry of the sorted
/// `samples` lying in [t0, t_end]; `on_step(t, y)` after every accepted step.
/// On return `y` holds the state at t_end.
template <class Rhs, class SampleFn, class StepFn = NoStepObserver>
Stats integrate(const Tableau& tb, Rhs&& f, double t0, std::vector<double>& y, double t_end,
                std::span<const double> samples, SampleFn&& on_sample, const StepOptions& opt,
                StepFn&& on_step = StepFn{}) {
  const std::size_t n = y.size();
  const int s = tb.stages;
  Stats stats;

  std::vector<double> atol(n);
  for (std::size_t i = 0; i < n; ++i) atol[i] = opt.atol.size() == 1 ? opt.atol[0] : opt.atol.at(i);

  std::vector<std::vector<double>> k(static_cast<std::size_t>(s), std::vector<double>(n));
  std::vector<double> ytmp(n), ynew(n), f0(n), f1(n), yint(n);

  auto eval = [&](double t, std::span<const double> yy, std::span<double> out) {
    f(t, yy, out);
    ++stats.rhs_evals;
  };

  std::size_t next_sample = 0;
  while (next_sample < samples.size() && samples[next_sample] < t0) ++next_sample;
  auto emit_until = [&](double ta, double tb_, double h, std::span<const double> ya,
                        std::span<const double> fa, std::span<const double> yb,
                        std::span<const double> fb) {
    while (next_sample < samples.size()) {
      const double ts = samples[next_sample];
      if (ts > tb_) break;
      if (ts >= tb_) {
        on_sample(ts, yb);
      } else if (ts <= ta) {
        on_sample(ts, ya);
      } else {
        const double th = (ts - ta) / h;
        const double th2 = th * th, th3 = th2 * th;
        const double h00 = 2 * th3 - 3 * th2 + 1, h10 = th3 - 2 * th2 + th;
        const double h01 = -2 * th3 + 3 * th2, h11 = th3 - th2;
        for (std::size_t i = 0; i < n; ++i)
          yint[i] = h00 * ya[i] + h10 * h * fa[i] + h01 * yb[i] + h11 * h * fb[i];
        on_sample(ts, yint);
      }
      ++next_sample;
    }
  };

  double t = t0;
  eval(t, y, f0);
  if (t_end <= t0) {
    emit_until(t, t, 1.0, y, f0, y, f0);
    return stats;
  }

  auto scale = [&](std::size_t i, double a, double b) {
    return atol[i] + opt.rtol * std::max(std::abs(a), std::abs(b));
  };
  auto rms = [&](auto&& term) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = term(i);
      acc += v * v;
    }
    return std::sqrt(acc / static_cast<double>(std::max<std::size_t>(n, 1)));
  };

  const double span = t_end - t0;
  double h = opt.initial_step;
  if (!(h > 0.0)) {
    const double d0 = rms([&](std::size_t i) { return y[i] / scale(i, y[i], y[i]); });
    const double d1 = rms([&](std::size_t i) { return f0[i] / scale(i, y[i], y[i]); });
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 * span : 0.01 * d0 / d1;
    h0 = std::min({h0, span, opt.max_step});
    for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + h0 * f0[i];
    eval(t + h0, ytmp, f1);
    const double d2 =
        rms([&](std::size_t i) { return (f1[i] - f0[i]) / scale(i, y[i], y[i]); }) / h0;
    const double dm = std::max(d1, d2);
    const double h1 = dm <= 1e-15 ? std::max(1e-6 * span, h0 * 1e-3)
                                  : std::pow(0.01 / dm, 1.0 / (tb.order + 1));
    h = std::min(100.0 * h0, h1);
  }
  h = std::min({h, span, opt.max_step});

  const double exponent = 1.0 / (tb.embedded_order + 1);
  const double eps = std::numeric_limits<double>::epsilon();
  bool last_rejected = false;

  while (t < t_end) {
    if (stats.accepted + stats.rejected >= opt.max_steps) {
      throw StepFailure("maximum number of integrator steps exceeded", t);
    }
    bool last = false;
    if (t + h >= t_end - 4 * eps * std::abs(t_end)) {
      h = t_end - t;
      last = true;
    }
    if (h <= 16 * eps * std::max(std::abs(t), 1.0)) {
      std::ostringstream os;
      os << "step size underflow at t = " << t;
      throw StepFailure(os.str(), t);
    }

    std::copy(f0.begin(), f0.end(), k[0].begin());
    for (int st = 1; st < s; ++st) {
      const auto& arow = tb.a[static_cast<std::size_t>(st)];
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < arow.size(); ++j) acc += arow[j] * k[j][i];
        ytmp[i] = y[i] + h * acc;
      }
      eval(t + tb.c[static_cast<std::size_t>(st)] * h, ytmp, k[static_cast<std::size_t>(st)]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int j = 0; j < s; ++j) acc += tb.b[static_cast<std::size_t>(j)] * k[static_cast<std::size_t>(j)][i];
      ynew[i] = y[i] + h * acc;
    }
    const double err = rms([&](std::size_t i) {
      double acc = 0.0;
      for (int j = 0; j < s; ++j) acc += tb.e[static_cast<std::size_t>(j)] * k[static_cast<std::size_t>(j)][i];
      return h * acc / scale(i, y[i], ynew[i]);
    });

    if (!std::isfinite(err) || err > 1.0) {
      ++stats.rejected;
      const double fac = std::isfinite(err) ? std::max(0.2, 0.9 * std::pow(err, -exponent)) : 0.2;
      h *= std::min(fac, 0.9);
      last_rejected = true;
      continue;
    }

    if (tb.fsal) {
      std::copy(k[static_cast<std::size_t>(s - 1)].begin(), k[static_cast<std::size_t>(s - 1)].end(),
                f1.begin());
    } else {
      eval(t + h, ynew, f1);
    }
    const double t_new = last ? t_end : t + h;
    emit_until(t, t_new, h, y, f0, ynew, f1);
    y.swap(ynew);
    f0.swap(f1);
    t = t_new;
    ++stats.accepted;
    on_step(t, std::span<const double>(y));

    double fac = err == 0.0 ? 5.0 : 0.9 * std::pow(err, -exponent);
    fac = std::clamp(fac, 0.2, last_rejected ? 1.0 : 5.0);
    last_rejected = false;
    h = std::min(h * fac, opt.max_step);
  }
  return stats;
}

}  // namespace biosense::ode
