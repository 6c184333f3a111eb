#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "qhbm/lifted.hpp"
#include "qhbm/quadsys.hpp"

namespace qhbm {

/// Fourier basis of H harmonics of the fundamental omega / 2^K.
///
/// Layout per variable block: [Z0; Zc1; Zs1; ...; ZcH; ZsH], each block n_eq
/// long, equation-major within a block.
struct HarmonicBasis {
  int harmonics = 1;
  std::size_t n_eq = 0;
  int subharmonic_exponent = 0;
  /// Forced systems tie lambda = p * omega; absent for autonomous systems.
  std::optional<int> forcing_multiple;

  std::size_t block_count() const { return 2 * static_cast<std::size_t>(harmonics) + 1; }
  std::size_t dof() const { return block_count() * n_eq; }
  int grid_divisor() const { return 1 << subharmonic_exponent; }
  /// Start of the block for harmonic k (k = 0 ignores phase).
  std::size_t offset(int k, Phase phase = Phase::Cos) const;
  /// Grid slot of the physical fundamental, 2^K.
  int fundamental_slot() const { return grid_divisor(); }

  friend bool operator==(const HarmonicBasis&, const HarmonicBasis&) = default;
};

/// Block slot b in [0, 2H]: 0 is the mean, 2k-1 the cos k block, 2k the sin k block.
constexpr std::size_t cos_slot(int k) { return 2 * static_cast<std::size_t>(k) - 1; }
constexpr std::size_t sin_slot(int k) { return 2 * static_cast<std::size_t>(k); }

/// Enumerates the truncated product-to-sum expansion of q(X(t), Y(t)):
/// visit(out_slot, x_slot, y_slot, weight) for every term of the harmonic
/// coefficients q0, q_{c,i}, q_{s,i} (harmonics above H dropped).
template <class Visit>
void for_each_product_term(int harmonics, Visit&& visit) {
  const int h = harmonics;
  visit(std::size_t{0}, std::size_t{0}, std::size_t{0}, 1.0);
  for (int j = 1; j <= h; ++j) {
    visit(std::size_t{0}, cos_slot(j), cos_slot(j), 0.5);
    visit(std::size_t{0}, sin_slot(j), sin_slot(j), 0.5);
  }
  for (int i = 1; i <= h; ++i) {
    const auto ci = cos_slot(i);
    const auto si = sin_slot(i);
    visit(ci, ci, std::size_t{0}, 1.0);
    visit(ci, std::size_t{0}, ci, 1.0);
    visit(si, si, std::size_t{0}, 1.0);
    visit(si, std::size_t{0}, si, 1.0);
    for (int j = 1; j < i; ++j) {
      visit(ci, cos_slot(j), cos_slot(i - j), 0.5);
      visit(ci, sin_slot(j), sin_slot(i - j), -0.5);
      visit(si, cos_slot(j), sin_slot(i - j), 0.5);
      visit(si, sin_slot(j), cos_slot(i - j), 0.5);
    }
    for (int j = i + 1; j <= h; ++j) {
      visit(ci, cos_slot(j), cos_slot(j - i), 0.5);
      visit(ci, sin_slot(j), sin_slot(j - i), 0.5);
      visit(ci, cos_slot(j - i), cos_slot(j), 0.5);
      visit(ci, sin_slot(j - i), sin_slot(j), 0.5);
      visit(si, cos_slot(j), sin_slot(j - i), -0.5);
      visit(si, sin_slot(j), cos_slot(j - i), 0.5);
      visit(si, cos_slot(j - i), sin_slot(j), 0.5);
      visit(si, sin_slot(j - i), cos_slot(j), -0.5);
    }
  }
}

class HarmonicVector {
 public:
  HarmonicVector() = default;
  explicit HarmonicVector(HarmonicBasis basis);
  HarmonicVector(HarmonicBasis basis, std::vector<double> data);

  const HarmonicBasis& basis() const { return basis_; }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  std::span<double> block(int k, Phase phase = Phase::Cos);
  std::span<const double> block(int k, Phase phase = Phase::Cos) const;

  /// sqrt(Zc_k^2 + Zs_k^2) for variable `var`; |Z0| for k = 0.
  double amplitude(std::size_t var, int k) const;

 private:
  HarmonicBasis basis_;
  std::vector<double> data_;
};

/// Z(t) from the truncated series with fundamental omega / 2^K.
std::vector<double> synthesize(const HarmonicVector& u, double omega, double t);
/// dZ/dt from term-by-term differentiation of the same series.
std::vector<double> synthesize_rate(const HarmonicVector& u, double omega, double t);

/// Lifted constant: k = 0 entries to the mean block, forcing harmonic k to grid
/// slot k * p * 2^K.
std::vector<double> lift_constant(const ForcedConstant& c, const HarmonicBasis& basis);
/// Blockwise l applied to every harmonic block.
std::vector<double> apply_linear(const SparseMatrix& l, const HarmonicVector& u);
/// Frequency-normalized derivative operator: omega * apply_mass(U) is the
/// coefficient vector of m(dZ/dt).
std::vector<double> apply_mass(const SparseMatrix& m, const HarmonicVector& u);
/// Truncated harmonic coefficients of q(X(t), Y(t)).
std::vector<double> apply_quadratic(std::span<const QuadEntry> quad, const HarmonicVector& x,
                                    const HarmonicVector& y);

/// Linear phase condition Z_{s,h}[variable] = 0. harmonic 0 selects the
/// physical fundamental, slot 2^K.
struct PhaseSpec {
  std::size_t variable = 0;
  int harmonic = 0;
};

/// Default phase variable: the first differential row's variable.
PhaseSpec default_phase(const QuadraticSystem& sys);

/// Builds the quadratic algebraic system over u = [U; lambda; omega]
/// (autonomous) or u = [U; omega] (forced, lambda = p * omega).
LiftedSystem assemble(const QuadraticSystem& sys, const HarmonicBasis& basis,
                      const std::optional<PhaseSpec>& phase);

/// Splits an extended point into its harmonic part.
HarmonicVector harmonic_part(const LiftedSystem& ls, const HarmonicBasis& basis, std::span<const double> u);
/// Packs U, lambda, omega into the extended unknown of `ls`.
std::vector<double> extended_point(const LiftedSystem& ls, const HarmonicVector& u, double lambda, double omega);

/// Re-expresses U on a finer grid (larger K and/or H); coefficients land on
/// slot k * 2^(K'-K).
HarmonicVector embed(const HarmonicVector& u, const HarmonicBasis& target);

nlohmann::json to_json(const HarmonicVector& u);
HarmonicVector harmonic_vector_from_json(const nlohmann::json& doc);

}  // namespace qhbm
