#include "biosense/kinetics.hpp"

#include <cmath>
#include <sstream>

#include "biosense/errors.hpp"

namespace biosense {

namespace {

constexpr std::array<std::string_view, kSpeciesCount> kNames = {"B", "C", "D", "S",
                                                                "W", "X", "Y", "Z"};

constexpr std::size_t idx(Species s) { return static_cast<std::size_t>(s); }

void require_nonnegative(std::span<const double> u, double A) {
  if (!(A >= 0.0)) {
    std::ostringstream os;
    os << "bulk concentration A must be >= 0 (got " << A << ")";
    throw DomainError(os.str());
  }
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (!(u[i] >= 0.0)) {
      std::ostringstream os;
      os << "species " << kNames[i] << " must be >= 0 (got " << u[i] << ")";
      throw DomainError(os.str());
    }
  }
}

}  // namespace

std::string_view species_name(Species s) { return kNames[idx(s)]; }

std::string_view species_name(std::size_t index) { return kNames.at(index); }

SpeciesVector SpeciesVector::from(std::span<const double> u) {
  if (u.size() != kSpeciesCount) {
    throw DomainError("species vector must have exactly 8 components");
  }
  SpeciesVector out;
  std::copy(u.begin(), u.end(), out.values.begin());
  return out;
}

void RateConstants::validate() const {
  for (std::size_t j = 0; j < kReactionCount; ++j) {
    if (!(forward[j] > 0.0) || !std::isfinite(forward[j])) {
      throw DomainError("forward rate constant f" + std::to_string(j + 1) + " must be > 0");
    }
    if (!(reverse[j] > 0.0) || !std::isfinite(reverse[j])) {
      throw DomainError("reverse rate constant r" + std::to_string(j + 1) + " must be > 0");
    }
  }
}

Stoichiometry Stoichiometry::ics(const RateConstants& k, MatrixVariant variant) {
  Stoichiometry st;
  // Columns R1..R7:  a+b=w, a+c=x, w+c=y, x+b=y, c+s=d, a+d=z, x+s=z
  st.matrix = {{
      {-1, 0, 0, -1, 0, 0, 0},   // B
      {0, -1, -1, 0, -1, 0, 0},  // C
      {0, 0, 0, 0, 1, -1, 0},    // D
      {0, 0, 0, 0, -1, 0, -1},   // S
      {1, 0, -1, 0, 0, 0, 0},    // W
      {0, 1, 0, -1, 0, 0, -1},   // X
      {0, 0, 1, 1, 0, 0, 0},     // Y
      {0, 0, 0, 0, 0, 1, 1},     // Z
  }};
  if (variant == MatrixVariant::AsPrinted) {
    st.matrix[idx(Species::C)] = {0, -1, -1, -1, 0, 0, 0};
  }
  st.q[Species::B] = k.f(1);
  st.q[Species::C] = k.f(2);
  st.q[Species::D] = k.f(6);
  st.p[Species::W] = k.r(1);
  st.p[Species::X] = k.r(2);
  st.p[Species::Z] = k.r(6);
  return st;
}

std::array<SpeciesVector, 3> moiety_selectors() {
  std::array<SpeciesVector, 3> sel{};
  for (auto s : {Species::B, Species::W, Species::Y}) sel[0][s] = 1.0;
  for (auto s : {Species::C, Species::X, Species::Y, Species::D, Species::Z}) sel[1][s] = 1.0;
  for (auto s : {Species::S, Species::D, Species::Z}) sel[2][s] = 1.0;
  return sel;
}

SpeciesVector adsorbed_selector() {
  SpeciesVector sel;
  for (auto s : {Species::W, Species::X, Species::Y, Species::Z}) sel[s] = 1.0;
  return sel;
}

double dot(const SpeciesVector& a, const SpeciesVector& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < kSpeciesCount; ++i) acc += a[i] * b[i];
  return acc;
}

RateVector rate_vector_unchecked(std::span<const double> u, double A, const RateConstants& k) {
  const double B = u[0], C = u[1], D = u[2], S = u[3];
  const double W = u[4], X = u[5], Y = u[6], Z = u[7];
  const auto& f = k.forward;
  const auto& r = k.reverse;
  return {
      f[0] * A * B - r[0] * W,
      f[1] * A * C - r[1] * X,
      f[2] * W * C - r[2] * Y,
      f[3] * X * B - r[3] * Y,
      f[4] * C * S - r[4] * D,
      f[5] * A * D - r[5] * Z,
      f[6] * X * S - r[6] * Z,
  };
}

void apply_stoichiometry(const Stoichiometry& st, const RateVector& rates, std::span<double> du) {
  for (std::size_t i = 0; i < kSpeciesCount; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < kReactionCount; ++j) acc += st.matrix[i][j] * rates[j];
    du[i] = acc;
  }
}

RateVector rate_vector(const SpeciesVector& u, double A, const RateConstants& k) {
  require_nonnegative(u.view(), A);
  return rate_vector_unchecked(u.view(), A, k);
}

SpeciesVector species_derivative(const SpeciesVector& u, double A, const RateConstants& k,
                                 const Stoichiometry& st) {
  SpeciesVector du;
  apply_stoichiometry(st, rate_vector(u, A, k), du.view());
  return du;
}

double adsorption_rate(double A, const SpeciesVector& u, const Stoichiometry& st) {
  require_nonnegative(u.view(), A);
  return A * dot(st.q, u) - dot(st.p, u);
}

SpeciesVector equilibrium_initial_state(double B0, double C_total, double S_total,
                                        const RateConstants& k) {
  if (!(B0 > 0.0) || !(C_total > 0.0) || !(S_total > 0.0)) {
    throw DomainError("initial totals B0, C_total, S_total must be > 0");
  }
  k.validate();
  // K (C_t - D)(S_t - D) = D  =>  K D^2 - (K (C_t + S_t) + 1) D + K C_t S_t = 0.
  // Smaller root in the cancellation-free form.
  const double K = k.f(5) / k.r(5);
  const double b = K * (C_total + S_total) + 1.0;
  const double disc = b * b - 4.0 * K * K * C_total * S_total;
  if (!(disc >= 0.0) || !std::isfinite(disc)) {
    throw NumericError("dimer equilibrium has no real root");
  }
  const double D = 2.0 * K * C_total * S_total / (b + std::sqrt(disc));
  if (!(D >= 0.0) || D > std::min(C_total, S_total)) {
    throw NumericError("dimer equilibrium root outside [0, min(C_total, S_total)]");
  }
  SpeciesVector u0;
  u0[Species::B] = B0;
  u0[Species::C] = C_total - D;
  u0[Species::S] = S_total - D;
  u0[Species::D] = D;
  return u0;
}

double SurfaceChemistry::adsorption(double A, std::span<const double> u) const {
  const auto q = capture_vector();
  const auto p = release_vector();
  double qu = 0.0, pu = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    qu += q[i] * u[i];
    pu += p[i] * u[i];
  }
  return A * qu - pu;
}

IcsChemistry::IcsChemistry(RateConstants k, SpeciesVector u0, MatrixVariant variant)
    : k_(k), st_(Stoichiometry::ics(k, variant)), u0_(u0) {
  k_.validate();
  require_nonnegative(u0_.view(), 0.0);
}

IcsChemistry IcsChemistry::from_totals(const RateConstants& k, double B0, double C_total,
                                       double S_total, MatrixVariant variant) {
  return IcsChemistry(k, equilibrium_initial_state(B0, C_total, S_total, k), variant);
}

void IcsChemistry::derivative(std::span<const double> u, double A, std::span<double> du) const {
  apply_stoichiometry(st_, rate_vector_unchecked(u, A, k_), du);
}

void IcsChemistry::jacobian(std::span<const double> u, double A, std::span<double> dG_du,
                            std::span<double> dG_dA) const {
  const double B = u[0], C = u[1], D = u[2], S = u[3], W = u[4], X = u[5];
  const auto& f = k_.forward;
  const auto& r = k_.reverse;
  // df/du, 7 x 8, columns in species order.
  double J[kReactionCount][kSpeciesCount] = {};
  J[0][0] = f[0] * A;
  J[0][4] = -r[0];
  J[1][1] = f[1] * A;
  J[1][5] = -r[1];
  J[2][4] = f[2] * C;
  J[2][1] = f[2] * W;
  J[2][6] = -r[2];
  J[3][5] = f[3] * B;
  J[3][0] = f[3] * X;
  J[3][6] = -r[3];
  J[4][1] = f[4] * S;
  J[4][3] = f[4] * C;
  J[4][2] = -r[4];
  J[5][2] = f[5] * A;
  J[5][7] = -r[5];
  J[6][5] = f[6] * S;
  J[6][3] = f[6] * X;
  J[6][7] = -r[6];
  const RateVector df_dA = {f[0] * B, f[1] * C, 0.0, 0.0, 0.0, f[5] * D, 0.0};

  for (std::size_t i = 0; i < kSpeciesCount; ++i) {
    double acc_a = 0.0;
    for (std::size_t c = 0; c < kSpeciesCount; ++c) {
      double acc = 0.0;
      for (std::size_t j = 0; j < kReactionCount; ++j) acc += st_.matrix[i][j] * J[j][c];
      dG_du[i * kSpeciesCount + c] = acc;
    }
    for (std::size_t j = 0; j < kReactionCount; ++j) acc_a += st_.matrix[i][j] * df_dA[j];
    dG_dA[i] = acc_a;
  }
}

double IcsChemistry::response(std::span<const double> u) const { return u[idx(Species::D)]; }

double IcsChemistry::bound_target(std::span<const double> u) const {
  return u[idx(Species::W)] + u[idx(Species::X)] + u[idx(Species::Y)] + u[idx(Species::Z)];
}

RateConstants default_rate_constants() {
  RateConstants k;
  k.forward = {7.5e5, 5e2, 1.5e12, 4.5e12, 5e12, 5e2, 2.5e11};
  k.reverse = {0.05, 0.05, 0.05, 1e-4, 1.0, 0.05, 0.05};
  return k;
}

std::shared_ptr<IcsChemistry> default_chemistry() {
  const SurfaceTotals t;
  return std::make_shared<IcsChemistry>(
      IcsChemistry::from_totals(default_rate_constants(), t.B0, t.C_total, t.S_total));
}

}  // namespace biosense
