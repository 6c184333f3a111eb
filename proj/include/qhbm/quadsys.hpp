#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qhbm/sparse.hpp"

namespace qhbm {

enum class Phase { Cos, Sin };

/// One harmonic component of the constant operator c(t). The harmonic index
/// counts multiples of the forcing frequency; k = 0 is the plain constant.
struct ForcingEntry {
  int harmonic = 0;
  Phase phase = Phase::Cos;
  std::size_t equation = 0;
  double value = 0.0;

  friend bool operator==(const ForcingEntry&, const ForcingEntry&) = default;
};

struct ForcedConstant {
  std::vector<ForcingEntry> entries;

  bool empty() const { return entries.empty(); }
  /// True when every entry has harmonic 0.
  bool autonomous() const;
  /// Accumulates c(t) into out; forcing_frequency multiplies the harmonic index.
  void accumulate(double t, double forcing_frequency, std::span<double> out, double scale = 1.0) const;

  friend bool operator==(const ForcedConstant&, const ForcedConstant&) = default;
};

/// Equation `equation` receives coefficient * X[first] * Y[second] in q(X, Y).
struct QuadEntry {
  std::size_t equation = 0;
  std::size_t first = 0;
  std::size_t second = 0;
  double coefficient = 0.0;

  friend bool operator==(const QuadEntry&, const QuadEntry&) = default;
};

/// m(dZ/dt) = c0(t) + lambda c1(t) + (l0 + lambda l1) Z + q(Z, Z)
///
/// Rows of `mass` that are entirely zero are algebraic equations. The quadratic
/// tensor is stored as written (not symmetrized) and never involves lambda.
struct QuadraticSystem {
  std::size_t n_eq = 0;
  SparseMatrix mass;
  ForcedConstant c0;
  ForcedConstant c1;
  SparseMatrix l0;
  SparseMatrix l1;
  std::vector<QuadEntry> quad;
  std::vector<std::string> var_names;
  std::vector<bool> differential_mask;
  std::vector<std::size_t> original_indices;

  /// True when c0 carries harmonic content (k > 0).
  bool forced() const { return !c0.autonomous() || !c1.autonomous(); }
  std::size_t differential_count() const;

  friend bool operator==(const QuadraticSystem&, const QuadraticSystem&) = default;
};

/// Human-readable list of invariant violations; empty when the system is well formed.
std::vector<std::string> validate(const QuadraticSystem& sys);

/// out += scale * q(X, Y)
template <class Scalar>
void accumulate_quadratic(std::span<const QuadEntry> quad, std::span<const Scalar> x,
                          std::span<const Scalar> y, std::span<Scalar> out, double scale = 1.0) {
  for (const auto& e : quad) out[e.equation] += Scalar(scale * e.coefficient) * x[e.first] * y[e.second];
}

std::vector<double> eval_quadratic(const QuadraticSystem& sys, std::span<const double> x,
                                   std::span<const double> y);

/// Time-domain residual m(Zdot) - c(t, lambda) - l(Z, lambda) - q(Z, Z).
/// Forcing harmonics are evaluated at frequency `forcing_frequency`; for
/// autonomous systems it is ignored.
std::vector<double> eval_residual_time(const QuadraticSystem& sys, std::span<const double> z,
                                       std::span<const double> zdot, double lambda, double t,
                                       double forcing_frequency = 0.0);

enum class ConstantPart { C0, C1 };
enum class LinearPart { L0, L1 };

/// Accumulating construction of a QuadraticSystem. Index errors throw
/// std::out_of_range immediately.
class SystemBuilder {
 public:
  explicit SystemBuilder(std::size_t n_eq);

  SystemBuilder& set_mass_entry(std::size_t row, std::size_t col, double value);
  SystemBuilder& add_constant(ConstantPart part, std::size_t equation, double value, int harmonic = 0,
                              Phase phase = Phase::Cos);
  SystemBuilder& add_linear(LinearPart part, std::size_t row, std::size_t col, double value);
  SystemBuilder& add_quadratic(std::size_t equation, std::size_t first, std::size_t second, double coefficient);
  SystemBuilder& set_var_names(std::vector<std::string> names);
  SystemBuilder& set_original_indices(std::vector<std::size_t> indices);

  /// Compresses storage and derives differential_mask from the mass rows.
  QuadraticSystem build() const;

 private:
  void check_index(std::size_t i, const char* what) const;

  QuadraticSystem sys_;
};

inline SystemBuilder new_system(std::size_t n_eq) { return SystemBuilder(n_eq); }

nlohmann::json to_json(const QuadraticSystem& sys);
/// Throws ConfigError on malformed documents; structural problems (bad
/// indices) are left for validate() to report.
QuadraticSystem system_from_json(const nlohmann::json& doc);

void save_system(const QuadraticSystem& sys, const std::filesystem::path& path);
QuadraticSystem load_system(const std::filesystem::path& path);

}  // namespace qhbm
