#include "biosense/pde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "biosense/compartment.hpp"
#include "biosense/errors.hpp"

namespace biosense {

int minimal_strict_steps(const ChamberConfig& cfg) {
  return static_cast<int>(std::floor(cfg.length * cfg.peak_velocity / cfg.diffusivity)) + 1;
}

GridSpec build_grid(const ChamberConfig& cfg, int P, int Q, AdvectionMode mode) {
  cfg.validate();
  if (P < 4 || Q < 4) throw ConfigError("grid needs P >= 4 and Q >= 4");
  GridSpec g;
  g.P = P;
  g.Q = Q;
  g.dy = cfg.length / P;
  g.dz = cfg.height / Q;
  g.mode = mode;
  const double limit = cfg.diffusivity / cfg.peak_velocity;
  if (mode == AdvectionMode::Strict && !(g.dy < limit)) {
    std::ostringstream os;
    os << "strict mode is positivity-preserving only for Δy < γ/v̄ (dy = " << g.dy
       << " m, gamma/v_bar = " << limit << " m); use P >= " << minimal_strict_steps(cfg)
       << " or relaxed mode";
    throw ConfigError(os.str());
  }
  constexpr double tol = 1e-9;
  for (int k = 0; k < cfg.sensor_count; ++k) {
    const int lo = std::max(1, static_cast<int>(std::ceil(cfg.sensor_start(k) / g.dy - tol)));
    const int hi = std::min(P - 1, static_cast<int>(std::floor(cfg.sensor_end(k) / g.dy + tol)));
    std::vector<int> nodes;
    for (int i = lo; i <= hi; ++i) nodes.push_back(i);
    if (nodes.empty()) {
      std::ostringstream os;
      os << "sensor " << k + 1 << " covers no grid node; refine P";
      throw ConfigError(os.str());
    }
    if (k > 0 && nodes.front() <= g.sensor_nodes.back().back()) {
      std::ostringstream os;
      os << "sensors " << k << " and " << k + 1 << " share grid nodes; refine P";
      throw ConfigError(os.str());
    }
    g.sensor_nodes.push_back(std::move(nodes));
  }
  return g;
}

PdeSolver::PdeSolver(ChamberConfig cfg, GridSpec grid, std::shared_ptr<const SurfaceChemistry> chem,
                     double inlet_concentration)
    : cfg_(cfg), grid_(std::move(grid)), chem_(std::move(chem)), A1_(inlet_concentration) {
  if (!chem_) throw ConfigError("PDE solver needs a chemistry");
  if (!(A1_ >= 0.0)) throw DomainError("inlet concentration must be >= 0");
  if (static_cast<int>(grid_.sensor_nodes.size()) != cfg_.sensor_count) {
    throw ConfigError("grid does not match the sensor count");
  }
  m_ = chem_->species_count();
  bulk_size_ = static_cast<std::size_t>(grid_.P - 1) * static_cast<std::size_t>(grid_.Q - 1);
  surface_offset_.assign(static_cast<std::size_t>(grid_.P + 1), -1);
  for (const auto& nodes : grid_.sensor_nodes) {
    for (int i : nodes) {
      surface_offset_[static_cast<std::size_t>(i)] =
          static_cast<long>(bulk_size_ + surface_i_.size() * m_);
      surface_i_.push_back(i);
    }
  }
  adv_.resize(static_cast<std::size_t>(grid_.Q + 1));
  for (int j = 0; j <= grid_.Q; ++j) adv_[j] = velocity(cfg_, j * grid_.dz) / grid_.dy;
  const auto q = chem_->capture_vector();
  const auto p = chem_->release_vector();
  q_.assign(q.begin(), q.end());
  p_.assign(p.begin(), p.end());
}

std::size_t PdeSolver::state_size() const { return bulk_size_ + surface_i_.size() * m_; }

std::vector<double> PdeSolver::initial_state() const {
  std::vector<double> y(state_size(), 0.0);
  const auto u0 = chem_->initial_state();
  for (std::size_t n = 0; n < surface_i_.size(); ++n) {
    std::copy(u0.begin(), u0.end(), y.begin() + static_cast<std::ptrdiff_t>(bulk_size_ + n * m_));
  }
  return y;
}

double PdeSolver::wall_value(std::span<const double> y, int i) const {
  const double a1 = y[bulk_index(i, 1)];
  const long off = surface_offset_[static_cast<std::size_t>(i)];
  if (off < 0) return a1;
  double qu = 0.0, pu = 0.0;
  for (std::size_t s = 0; s < m_; ++s) {
    qu += q_[s] * y[static_cast<std::size_t>(off) + s];
    pu += p_[s] * y[static_cast<std::size_t>(off) + s];
  }
  const double r = grid_.dz / cfg_.diffusivity;
  return (a1 + r * pu) / (1.0 + r * qu);
}

std::vector<double> PdeSolver::pack(const PdeField& field) const {
  if (field.P != grid_.P || field.Q != grid_.Q) throw DomainError("field does not match the grid");
  std::vector<double> y(state_size());
  for (int i = 1; i < grid_.P; ++i)
    for (int j = 1; j < grid_.Q; ++j) y[bulk_index(i, j)] = field.at(i, j);
  std::size_t n = 0;
  for (std::size_t k = 0; k < grid_.sensor_nodes.size(); ++k) {
    for (std::size_t a = 0; a < grid_.sensor_nodes[k].size(); ++a, ++n) {
      const auto& u = field.U.at(k).at(a);
      if (u.size() != m_) throw DomainError("species vector has the wrong length");
      std::copy(u.begin(), u.end(), y.begin() + static_cast<std::ptrdiff_t>(bulk_size_ + n * m_));
    }
  }
  return y;
}

PdeField PdeSolver::unpack(std::span<const double> y, double t) const {
  const int P = grid_.P, Q = grid_.Q;
  PdeField f;
  f.P = P;
  f.Q = Q;
  f.t = t;
  f.A.assign(static_cast<std::size_t>(P + 1) * (Q + 1), 0.0);
  auto A = [&](int i, int j) -> double& { return f.A[static_cast<std::size_t>(i) * (Q + 1) + j]; };
  for (int i = 1; i < P; ++i) {
    for (int j = 1; j < Q; ++j) A(i, j) = y[bulk_index(i, j)];
    A(i, 0) = wall_value(y, i);
    A(i, Q) = A(i, Q - 1);
  }
  for (int j = 0; j <= Q; ++j) {
    A(0, j) = A1_;
    A(P, j) = A(P - 1, j);
  }
  std::size_t n = 0;
  f.U.resize(grid_.sensor_nodes.size());
  for (std::size_t k = 0; k < grid_.sensor_nodes.size(); ++k) {
    for (std::size_t a = 0; a < grid_.sensor_nodes[k].size(); ++a, ++n) {
      const auto first = y.begin() + static_cast<std::ptrdiff_t>(bulk_size_ + n * m_);
      f.U[k].emplace_back(first, first + static_cast<std::ptrdiff_t>(m_));
    }
  }
  return f;
}

void PdeSolver::rhs(std::span<const double> y, std::span<double> dy) const {
  const int P = grid_.P, Q = grid_.Q;
  const std::size_t stride = static_cast<std::size_t>(Q - 1);
  const double cy = cfg_.diffusivity / (grid_.dy * grid_.dy);
  const double cz = cfg_.diffusivity / (grid_.dz * grid_.dz);
  const bool strict = grid_.mode == AdvectionMode::Strict;

  for (int i = 1; i < P; ++i) {
    const double* col = y.data() + static_cast<std::size_t>(i - 1) * stride;
    const double* left = i == 1 ? nullptr : col - stride;
    const double* right = i == P - 1 ? col : col + stride;
    double* out = dy.data() + static_cast<std::size_t>(i - 1) * stride;
    const double wall = wall_value(y, i);
    for (int j = 1; j < Q; ++j) {
      const std::size_t jj = static_cast<std::size_t>(j - 1);
      const double c = col[jj];
      const double l = left ? left[jj] : A1_;
      const double r = right[jj];
      const double d = j == 1 ? wall : col[jj - 1];
      const double u = j == Q - 1 ? c : col[jj + 1];
      const double adv = strict ? adv_[j] * (r - c) : adv_[j] * (c - l);
      out[jj] = cy * (l - 2.0 * c + r) + cz * (d - 2.0 * c + u) - adv;
    }
    const long off = surface_offset_[static_cast<std::size_t>(i)];
    if (off >= 0) {
      const auto o = static_cast<std::size_t>(off);
      chem_->derivative(y.subspan(o, m_), wall, dy.subspan(o, m_));
    }
  }

  for (std::size_t k = 0; k < dy.size(); ++k) {
    if (!std::isfinite(dy[k])) {
      std::ostringstream os;
      if (k < bulk_size_) {
        os << "non-finite bulk derivative at node (i, j) = (" << k / stride + 1 << ", "
           << k % stride + 1 << ")";
      } else {
        const std::size_t n = (k - bulk_size_) / m_;
        os << "non-finite surface derivative at node i = " << surface_i_[n] << ", species "
           << (k - bulk_size_) % m_;
      }
      throw NumericError(os.str());
    }
  }
}

double PdeSolver::mass(std::span<const double> y) const {
  double bulk = 0.0;
  for (std::size_t k = 0; k < bulk_size_; ++k) bulk += y[k];
  double surf = 0.0;
  for (std::size_t n = 0; n < surface_i_.size(); ++n)
    surf += chem_->bound_target(y.subspan(bulk_size_ + n * m_, m_));
  return cfg_.width * (bulk * grid_.dy * grid_.dz + surf * grid_.dy);
}

double PdeSolver::boundary_flux(std::span<const double> y) const {
  const int P = grid_.P, Q = grid_.Q;
  const bool strict = grid_.mode == AdvectionMode::Strict;
  double flux = 0.0;
  for (int j = 1; j < Q; ++j) {
    const double a_first = y[bulk_index(1, j)];
    const double a_last = y[bulk_index(P - 1, j)];
    const double diffusive = cfg_.diffusivity * (A1_ - a_first) / grid_.dy;
    const double v = adv_[j] * grid_.dy;
    const double advective = strict ? v * (a_first - a_last) : v * (A1_ - a_last);
    flux += (diffusive + advective) * grid_.dz;
  }
  return cfg_.width * flux;
}

std::vector<double> PdeSolver::response_means(std::span<const double> y) const {
  std::vector<double> out;
  std::size_t n = 0;
  for (const auto& nodes : grid_.sensor_nodes) {
    double acc = 0.0;
    for (std::size_t a = 0; a < nodes.size(); ++a, ++n) {
      acc += chem_->response(y.subspan(bulk_size_ + n * m_, m_));
    }
    out.push_back(nodes.empty() ? std::numeric_limits<double>::quiet_NaN()
                                : acc / static_cast<double>(nodes.size()));
  }
  return out;
}

double PdeSolver::max_step(const PdeOptions& opt) const {
  const double h = std::min(grid_.dy, grid_.dz);
  return opt.cfl * h * h / (2.0 * cfg_.diffusivity);
}

PdeRun PdeSolver::integrate(std::vector<double> y0, double horizon, double sample_dt,
                            const PdeOptions& opt,
                            const std::function<void(double, std::span<const double>)>& on_step) const {
  if (y0.size() != state_size()) throw DomainError("initial state has the wrong size");
  for (double v : y0) {
    if (!(v >= 0.0)) throw DomainError("initial PDE state must be nonnegative");
  }
  const auto samples = uniform_grid(horizon, sample_dt);

  double u_scale = 0.0;
  for (double v : chem_->initial_state()) u_scale = std::max(u_scale, std::abs(v));
  for (std::size_t k = bulk_size_; k < y0.size(); ++k) u_scale = std::max(u_scale, y0[k]);
  double a_scale = A1_;
  for (std::size_t k = 0; k < bulk_size_; ++k) a_scale = std::max(a_scale, y0[k]);
  a_scale = std::max(a_scale, 1e-30);
  u_scale = std::max(u_scale, 1e-30);

  ode::StepOptions step;
  step.rtol = opt.rtol;
  step.max_step = max_step(opt);
  step.atol.assign(y0.size(), opt.atol_factor * u_scale);
  std::fill(step.atol.begin(), step.atol.begin() + static_cast<std::ptrdiff_t>(bulk_size_),
            opt.atol_factor * a_scale);

  PdeRun run;
  run.dimer.resize(grid_.sensor_nodes.size());
  run.min_bulk = std::numeric_limits<double>::infinity();
  run.min_surface = std::numeric_limits<double>::infinity();

  auto track = [&](std::span<const double> y) {
    for (std::size_t k = 0; k < bulk_size_; ++k) run.min_bulk = std::min(run.min_bulk, y[k]);
    for (std::size_t k = bulk_size_; k < y.size(); ++k)
      run.min_surface = std::min(run.min_surface, y[k]);
  };
  track(y0);

  auto on_sample = [&](double t, std::span<const double> y) {
    run.times.push_back(t);
    const auto means = response_means(y);
    for (std::size_t k = 0; k < means.size(); ++k) run.dimer[k].push_back(means[k]);
    if (opt.keep_snapshots) run.snapshots.push_back(unpack(y, t));
  };
  auto observer = [&](double t, std::span<const double> y) {
    track(y);
    if (on_step) on_step(t, y);
  };
  auto f = [this](double, std::span<const double> y, std::span<double> dy) { rhs(y, dy); };

  if (on_step) on_step(0.0, y0);
  run.stats = ode::integrate(ode::bogacki_shampine32(), f, 0.0, y0, samples.back(), samples,
                             on_sample, step, observer);
  run.positivity_violation =
      run.min_bulk < -1e-12 * a_scale || run.min_surface < -1e-12 * u_scale;
  return run;
}

double peclet(const ChamberConfig& cfg, double z) {
  if (z < 0.0 || z > cfg.height) throw DomainError("peclet: z must lie in [0, h]");
  const double Z = z / cfg.height;
  const double p = cfg.diffusivity / (4.0 * cfg.height * cfg.peak_velocity);
  return (cfg.sensor_length / cfg.height) * Z * (1.0 - Z) / p;
}

}  // namespace biosense
