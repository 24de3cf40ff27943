#pragma once

// Surface reaction network of the ion-channel-switch (ICS) biosensor and the
// generic chemistry interface used by the compartment and PDE solvers.

#include <array>
#include <cstddef>
#include <memory>
#include <span>
#include <string_view>

namespace biosense {

inline constexpr std::size_t kSpeciesCount = 8;
inline constexpr std::size_t kReactionCount = 7;

/// Fixed species order [B, C, D, S, W, X, Y, Z].
enum class Species : std::size_t { B = 0, C, D, S, W, X, Y, Z };

std::string_view species_name(Species s);
std::string_view species_name(std::size_t index);

/// Surface densities in mol/m^2.
struct SpeciesVector {
  std::array<double, kSpeciesCount> values{};

  double& operator[](Species s) { return values[static_cast<std::size_t>(s)]; }
  double operator[](Species s) const { return values[static_cast<std::size_t>(s)]; }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }

  double b() const { return (*this)[Species::B]; }
  double c() const { return (*this)[Species::C]; }
  double d() const { return (*this)[Species::D]; }
  double s() const { return (*this)[Species::S]; }
  double w() const { return (*this)[Species::W]; }
  double x() const { return (*this)[Species::X]; }
  double y() const { return (*this)[Species::Y]; }
  double z() const { return (*this)[Species::Z]; }

  std::span<const double, kSpeciesCount> view() const { return values; }
  std::span<double, kSpeciesCount> view() { return values; }

  /// Throws DomainError if the span is not exactly kSpeciesCount long.
  static SpeciesVector from(std::span<const double> u);

  friend bool operator==(const SpeciesVector&, const SpeciesVector&) = default;
};

using RateVector = std::array<double, kReactionCount>;

/// Forward constants f1..f7 and reverse constants r1..r7 (SI).
/// f1, f2, f6 couple bulk and surface (m^3/(mol s)); f3, f4, f5, f7 are
/// surface-surface (m^2/(mol s)); all r_j are 1/s.
struct RateConstants {
  RateVector forward{};
  RateVector reverse{};

  double f(int j) const { return forward[static_cast<std::size_t>(j - 1)]; }
  double r(int j) const { return reverse[static_cast<std::size_t>(j - 1)]; }

  /// Throws DomainError unless every constant is finite and > 0.
  void validate() const;
};

enum class MatrixVariant {
  /// Row C consumes C in R2, R3 and R5; all three moieties are conserved.
  Corrected,
  /// Row C exactly as typeset in the original derivation (-1 in the R4
  /// column, 0 in the R5 column). Kept for comparison only.
  AsPrinted,
};

/// 8x7 stoichiometric matrix plus the adsorption vectors q, p for which
/// R(A, u) = A q^T u - p^T u.
struct Stoichiometry {
  std::array<std::array<int, kReactionCount>, kSpeciesCount> matrix{};
  SpeciesVector q;
  SpeciesVector p;

  static Stoichiometry ics(const RateConstants& k,
                           MatrixVariant variant = MatrixVariant::Corrected);
};

/// Moiety selector vectors: binding sites (B+W+Y), mobile channels
/// (C+X+Y+D+Z), tethered channels (S+D+Z).
std::array<SpeciesVector, 3> moiety_selectors();

/// Selector of the adsorbed-target complexes W+X+Y+Z.
SpeciesVector adsorbed_selector();

double dot(const SpeciesVector& a, const SpeciesVector& b);

// --- checked operations ----------------------------------------------------

/// [R1..R7] for the ICS reactions. Throws DomainError naming the offending
/// component when u or A is negative.
RateVector rate_vector(const SpeciesVector& u, double A, const RateConstants& k);

/// M * rate_vector(u, A, k).
SpeciesVector species_derivative(const SpeciesVector& u, double A, const RateConstants& k,
                                 const Stoichiometry& st);

/// A q^T u - p^T u; negative values mean net desorption.
double adsorption_rate(double A, const SpeciesVector& u, const Stoichiometry& st);

/// Pre-exposure state: no complexes, B = B0, and (C, S, D) at the dimer
/// equilibrium f5 C S = r5 D with C + D = C_total and S + D = S_total.
SpeciesVector equilibrium_initial_state(double B0, double C_total, double S_total,
                                        const RateConstants& k);

// --- unchecked kernels for integrator inner loops ---------------------------

RateVector rate_vector_unchecked(std::span<const double> u, double A, const RateConstants& k);

void apply_stoichiometry(const Stoichiometry& st, const RateVector& rates, std::span<double> du);

// --- generic chemistry interface ---------------------------------------------

/// Surface chemistry seen by the transport solvers. Adsorption must be affine
/// in the bulk concentration, R(A, u) = A q^T u - p^T u; the wall closure of
/// the finite-difference solver relies on it.
class SurfaceChemistry {
 public:
  virtual ~SurfaceChemistry() = default;

  virtual std::size_t species_count() const = 0;

  /// du/dt = G(u, A).
  virtual void derivative(std::span<const double> u, double A, std::span<double> du) const = 0;

  /// dG/du (row-major, species_count^2 entries) and dG/dA.
  virtual void jacobian(std::span<const double> u, double A, std::span<double> dG_du,
                        std::span<double> dG_dA) const = 0;

  virtual std::span<const double> capture_vector() const = 0;  // q
  virtual std::span<const double> release_vector() const = 0;  // p

  /// Transducer output F(u).
  virtual double response(std::span<const double> u) const = 0;
  virtual std::size_t response_index() const = 0;

  /// Analyte held on the surface (mol/m^2); its time derivative is R(A, u).
  virtual double bound_target(std::span<const double> u) const = 0;

  /// u0, the state at which each sensor starts.
  virtual std::span<const double> initial_state() const = 0;

  double adsorption(double A, std::span<const double> u) const;
};

/// The ICS network as a SurfaceChemistry; the response is the dimer density.
class IcsChemistry final : public SurfaceChemistry {
 public:
  IcsChemistry(RateConstants k, SpeciesVector u0,
               MatrixVariant variant = MatrixVariant::Corrected);

  /// Builds u0 with equilibrium_initial_state.
  static IcsChemistry from_totals(const RateConstants& k, double B0, double C_total,
                                  double S_total,
                                  MatrixVariant variant = MatrixVariant::Corrected);

  std::size_t species_count() const override { return kSpeciesCount; }
  void derivative(std::span<const double> u, double A, std::span<double> du) const override;
  void jacobian(std::span<const double> u, double A, std::span<double> dG_du,
                std::span<double> dG_dA) const override;
  std::span<const double> capture_vector() const override { return st_.q.view(); }
  std::span<const double> release_vector() const override { return st_.p.view(); }
  double response(std::span<const double> u) const override;
  std::size_t response_index() const override { return static_cast<std::size_t>(Species::D); }
  double bound_target(std::span<const double> u) const override;
  std::span<const double> initial_state() const override { return u0_.view(); }

  const RateConstants& rates() const { return k_; }
  const Stoichiometry& stoichiometry() const { return st_; }
  const SpeciesVector& u0() const { return u0_; }

 private:
  RateConstants k_;
  Stoichiometry st_;
  SpeciesVector u0_;
};

/// Initial surface totals for IcsChemistry::from_totals (mol/m^2).
struct SurfaceTotals {
  double B0 = 4e-13;
  double C_total = 4e-13;
  double S_total = 4e-13;
};

/// Repository default constants. Synthetic: they satisfy detailed balance
/// (K1 K3 = K2 K4, K2 K7 = K5 K6) and put the half-response near 1e-8 mol/m^3.
RateConstants default_rate_constants();

std::shared_ptr<IcsChemistry> default_chemistry();

}  // namespace biosense
