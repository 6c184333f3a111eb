#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "qhbm/sparse.hpp"

namespace qhbm {

struct HarmonicBasis;

/// out[row] accumulates coefficient * x[first] * y[second].
struct QuadTerm {
  std::size_t row = 0;
  std::size_t first = 0;
  std::size_t second = 0;
  double coefficient = 0.0;
};

/// Quadratic algebraic system r(u) = L0 + L u + Q(u, u) with N residuals and
/// N + 1 unknowns. Produced by hbm::assemble or written by hand for purely
/// algebraic problems.
struct LiftedSystem {
  std::size_t n_res = 0;
  std::vector<double> constant;
  SparseMatrix linear;
  std::vector<QuadTerm> quadratic;

  std::optional<std::size_t> lambda_index;
  std::optional<std::size_t> omega_index;
  std::optional<std::size_t> phase_row;
  /// Present for systems produced by harmonic balance.
  std::optional<std::size_t> harmonic_dof;
  int forcing_multiple = 0;

  std::size_t n_unknown() const { return n_res + 1; }
  bool forced() const { return forcing_multiple > 0; }

  /// Continuation parameter value at u; for forced systems lambda = p * omega.
  double lambda_of(std::span<const double> u) const;
  double omega_of(std::span<const double> u) const;

  /// Sorts quadratic terms and merges duplicates.
  void compress();
};

/// Builds an empty N x (N+1) system.
LiftedSystem make_algebraic_system(std::size_t n_res);

template <class Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <class Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// out += scale * Q(x, y)
template <class Scalar>
void bilinear_add(const LiftedSystem& ls, const Scalar* x, const Scalar* y, Scalar* out) {
  for (const auto& t : ls.quadratic) out[t.row] += Scalar(t.coefficient) * x[t.first] * y[t.second];
}

template <class Scalar>
VectorX<Scalar> bilinear(const LiftedSystem& ls, const VectorX<Scalar>& x, const VectorX<Scalar>& y) {
  VectorX<Scalar> out = VectorX<Scalar>::Zero(static_cast<Eigen::Index>(ls.n_res));
  bilinear_add(ls, x.data(), y.data(), out.data());
  return out;
}

template <class Scalar>
VectorX<Scalar> linear_apply(const LiftedSystem& ls, const VectorX<Scalar>& x) {
  VectorX<Scalar> out = VectorX<Scalar>::Zero(static_cast<Eigen::Index>(ls.n_res));
  for (const auto& e : ls.linear.entries()) out[e.row] += Scalar(e.value) * x[e.col];
  return out;
}

template <class Scalar>
VectorX<Scalar> residual_of(const LiftedSystem& ls, const VectorX<Scalar>& u) {
  VectorX<Scalar> r = linear_apply(ls, u);
  for (std::size_t i = 0; i < ls.n_res; ++i) r[i] += Scalar(ls.constant[i]);
  bilinear_add(ls, u.data(), u.data(), r.data());
  return r;
}

/// dr/du = L + Q(u, .) + Q(., u), assembled from the tensors.
template <class Scalar>
MatrixX<Scalar> jacobian_of(const LiftedSystem& ls, const VectorX<Scalar>& u) {
  const auto n = static_cast<Eigen::Index>(ls.n_res);
  MatrixX<Scalar> j = MatrixX<Scalar>::Zero(n, n + 1);
  for (const auto& e : ls.linear.entries()) j(e.row, e.col) += Scalar(e.value);
  for (const auto& t : ls.quadratic) {
    const Scalar c(t.coefficient);
    j(t.row, t.first) += c * u[t.second];
    j(t.row, t.second) += c * u[t.first];
  }
  return j;
}

std::vector<double> residual(const LiftedSystem& ls, std::span<const double> u);
Eigen::MatrixXd jacobian(const LiftedSystem& ls, std::span<const double> u);

}  // namespace qhbm
