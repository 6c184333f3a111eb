#pragma once

// Shared fixtures for the unit tests: random systems, an independent
// trigonometric projection, finite differences and small algebraic systems
// with closed-form solution sets.

#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "qhbm/hbm.hpp"
#include "qhbm/lifted.hpp"
#include "qhbm/quadsys.hpp"

namespace qhbm::testing {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  double uniform(double lo = -1.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen_); }
  bool coin(double p = 0.5) { return uniform(0.0, 1.0) < p; }

 private:
  std::mt19937_64 gen_;
};

/// Random well-formed system: a random subset of rows (at least one) is
/// differential with a random mass row, every row gets a constant, linear and
/// quadratic part. With `forced`, lambda-proportional terms are left out (lambda
/// is tied to omega) and forcing harmonics up to `max_forcing` enter c0.
inline QuadraticSystem random_system(Rng& rng, std::size_t ne, bool forced = false, int max_forcing = 2) {
  SystemBuilder b(ne);
  const std::size_t lead = static_cast<std::size_t>(rng.integer(0, static_cast<int>(ne) - 1));
  for (std::size_t r = 0; r < ne; ++r) {
    if (r == lead || rng.coin()) {
      b.set_mass_entry(r, r, rng.uniform(0.5, 1.5));
      if (rng.coin(0.3)) b.set_mass_entry(r, static_cast<std::size_t>(rng.integer(0, static_cast<int>(ne) - 1)), rng.uniform());
    }
    b.add_constant(ConstantPart::C0, r, rng.uniform());
    if (!forced && rng.coin()) b.add_constant(ConstantPart::C1, r, rng.uniform());
    for (int k = 0; k < 2; ++k) {
      b.add_linear(LinearPart::L0, r, static_cast<std::size_t>(rng.integer(0, static_cast<int>(ne) - 1)), rng.uniform());
      if (!forced) {
        b.add_linear(LinearPart::L1, r, static_cast<std::size_t>(rng.integer(0, static_cast<int>(ne) - 1)), rng.uniform());
      }
      b.add_quadratic(r, static_cast<std::size_t>(rng.integer(0, static_cast<int>(ne) - 1)),
                      static_cast<std::size_t>(rng.integer(0, static_cast<int>(ne) - 1)), rng.uniform());
    }
    if (forced) {
      const int k = rng.integer(1, max_forcing);
      b.add_constant(ConstantPart::C0, r, rng.uniform(), k, rng.coin() ? Phase::Cos : Phase::Sin);
    }
  }
  return b.build();
}

inline HarmonicVector random_harmonics(Rng& rng, const HarmonicBasis& basis, double scale = 1.0) {
  HarmonicVector u(basis);
  for (auto& v : u.data()) v = scale * rng.uniform();
  return u;
}

/// Trigonometric projection of a vector signal of period 2 pi / nu on S
/// equispaced samples, written out directly: mean, then 2/S sums against
/// cos(k nu t) and sin(k nu t). Layout matches HarmonicVector.
inline std::vector<double> project(const std::function<std::vector<double>(double)>& f, double nu, int harmonics,
                                   std::size_t ne, int samples) {
  std::vector<double> out((2 * static_cast<std::size_t>(harmonics) + 1) * ne, 0.0);
  const double period = 2.0 * std::numbers::pi / nu;
  for (int j = 0; j < samples; ++j) {
    const double t = period * j / samples;
    const auto v = f(t);
    for (std::size_t i = 0; i < ne; ++i) out[i] += v[i] / samples;
    for (int k = 1; k <= harmonics; ++k) {
      const double c = std::cos(k * nu * t);
      const double s = std::sin(k * nu * t);
      for (std::size_t i = 0; i < ne; ++i) {
        out[(2 * static_cast<std::size_t>(k) - 1) * ne + i] += 2.0 * c * v[i] / samples;
        out[2 * static_cast<std::size_t>(k) * ne + i] += 2.0 * s * v[i] / samples;
      }
    }
  }
  return out;
}

/// Z(t) summed directly from the coefficients with fundamental nu.
inline std::vector<double> evaluate(const HarmonicVector& u, double nu, double t) {
  const auto& b = u.basis();
  std::vector<double> z(b.n_eq, 0.0);
  for (std::size_t i = 0; i < b.n_eq; ++i) z[i] = u.block(0)[i];
  for (int k = 1; k <= b.harmonics; ++k) {
    for (std::size_t i = 0; i < b.n_eq; ++i) {
      z[i] += u.block(k, Phase::Cos)[i] * std::cos(k * nu * t) + u.block(k, Phase::Sin)[i] * std::sin(k * nu * t);
    }
  }
  return z;
}

/// dZ/dt of the same sum.
inline std::vector<double> evaluate_rate(const HarmonicVector& u, double nu, double t) {
  const auto& b = u.basis();
  std::vector<double> z(b.n_eq, 0.0);
  for (int k = 1; k <= b.harmonics; ++k) {
    for (std::size_t i = 0; i < b.n_eq; ++i) {
      z[i] += k * nu *
              (-u.block(k, Phase::Cos)[i] * std::sin(k * nu * t) + u.block(k, Phase::Sin)[i] * std::cos(k * nu * t));
    }
  }
  return z;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

inline Eigen::MatrixXd fd_jacobian(const LiftedSystem& ls, const Eigen::VectorXd& u, double h = 1e-6) {
  const auto n = static_cast<Eigen::Index>(ls.n_res);
  Eigen::MatrixXd j(n, n + 1);
  for (Eigen::Index c = 0; c <= n; ++c) {
    Eigen::VectorXd up = u, um = u;
    up[c] += h;
    um[c] -= h;
    j.col(c) = (residual_of<double>(ls, up) - residual_of<double>(ls, um)) / (2 * h);
  }
  return j;
}

/// x^2 + y^2 - 1 = 0 over u = (x, y).
inline LiftedSystem circle_system() {
  auto ls = make_algebraic_system(1);
  ls.constant[0] = -1.0;
  ls.quadratic.push_back({0, 0, 0, 1.0});
  ls.quadratic.push_back({0, 1, 1, 1.0});
  return ls;
}

/// x - lambda = 0 over u = (x, lambda).
inline LiftedSystem linear_system() {
  auto ls = make_algebraic_system(1);
  ls.linear.add(0, 0, 1.0);
  ls.linear.add(0, 1, -1.0);
  ls.lambda_index = 1;
  return ls;
}

/// Pitchfork normal form lambda x - x^3 = 0 recast with y = x^2:
/// lambda x - x y = 0, y - x^2 = 0 over u = (x, y, lambda).
inline LiftedSystem pitchfork_system() {
  auto ls = make_algebraic_system(2);
  ls.quadratic.push_back({0, 2, 0, 1.0});
  ls.quadratic.push_back({0, 0, 1, -1.0});
  ls.linear.add(1, 1, 1.0);
  ls.quadratic.push_back({1, 0, 0, -1.0});
  ls.lambda_index = 2;
  return ls;
}

inline Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

inline std::span<const double> view(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace qhbm::testing
