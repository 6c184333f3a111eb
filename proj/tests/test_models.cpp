#include <doctest.h>

#include <cmath>
#include <complex>

#include "qhbm/models.hpp"
#include "qhbm/start.hpp"
#include "support.hpp"

using namespace qhbm;
using namespace qhbm::testing;

namespace {

bool row_has_mass(const QuadraticSystem& sys, std::size_t row) {
  for (const auto& e : sys.mass.entries()) {
    if (e.row == row && e.value != 0.0) return true;
  }
  return false;
}

std::size_t mass_entries_in_row(const QuadraticSystem& sys, std::size_t row) {
  std::size_t n = 0;
  for (const auto& e : sys.mass.entries()) n += (e.row == row && e.value != 0.0) ? 1 : 0;
  return n;
}

/// Time residual of the lifted state with zdot taken from the original rhs
/// where available (aux rates do not enter algebraic rows).
std::vector<double> steady_residual(const Model& m, const std::vector<double>& z, double lambda) {
  const std::vector<double> zdot(z.size(), 0.0);
  return eval_residual_time(m.system, z, zdot, lambda, 0.0);
}

}  // namespace

TEST_CASE("every built-in model is well formed") {
  for (const auto& name : model_names()) {
    CAPTURE(name);
    const auto m = model_by_name(name);
    CHECK(validate(m.system).empty());
    CHECK(m.system.var_names.size() == m.system.n_eq);
    CHECK(m.basis.n_eq == m.system.n_eq);
    CHECK(m.window_lo < m.window_hi);
    CHECK(m.system.forced() == m.window_on_omega);
    CHECK(m.original.dim == m.original.state_indices.size());
  }
}

TEST_CASE("van der pol structure and steady state") {
  const auto m = vdp();
  CHECK(m.system.n_eq == 4);
  CHECK(row_has_mass(m.system, 0));
  CHECK(row_has_mass(m.system, 1));
  CHECK_FALSE(row_has_mass(m.system, 2));
  CHECK_FALSE(row_has_mass(m.system, 3));
  CHECK(m.system.c1.empty());
  CHECK(m.system.l1.entries().size() == 1);
  CHECK(m.system.l1.coeff(1, 3) == 1.0);

  const auto eq = equilibrium(m.system, 0.7, {0.3, -0.2, 0.5, 0.1});
  CHECK(max_abs_diff(eq, std::vector<double>{0.0, 0.0, 1.0, 0.0}) <= 1e-12);

  // The linearization of the original oscillator about rest has s^2 - lambda s + 1 = 0.
  const double lambda = 0.7;
  const auto spec = linear_spectrum(m.system, lambda, eq);
  REQUIRE(spec.size() == 2);
  const std::complex<double> disc = std::sqrt(std::complex<double>(lambda * lambda - 4.0));
  for (const auto& s : spec) {
    const double d = std::min(std::abs(s - (lambda + disc) / 2.0), std::abs(s - (lambda - disc) / 2.0));
    CHECK(d <= 1e-10);
  }
}

TEST_CASE("rossler structure and steady state") {
  const auto m = rossler(0.2, 0.3);
  CHECK(m.system.n_eq == 3);
  CHECK(m.system.l1.entries().size() == 1);
  CHECK(m.system.l1.coeff(2, 2) == -1.0);
  CHECK(m.system.c1.empty());
  REQUIRE(m.system.c0.entries.size() == 1);
  CHECK(m.system.c0.entries[0].equation == 2);
  CHECK(m.system.c0.entries[0].value == 0.3);

  const double lambda = 3.0;
  const auto guess = m.equilibrium_guess(lambda);
  std::vector<double> dy(3);
  m.original.rhs(0.0, guess, lambda, dy);
  CHECK(std::abs(dy[0]) + std::abs(dy[1]) + std::abs(dy[2]) <= 1e-12);
  CHECK(max_abs_diff(steady_residual(m, guess, lambda), std::vector<double>(3, 0.0)) <= 1e-12);
}

TEST_CASE("clarinet structure") {
  const auto m = clarinet();
  const std::size_t n = 5;
  CHECK(m.system.n_eq == 2 * n + 5);
  CHECK(m.system.var_names.front() == "x");
  CHECK(m.system.var_names[2] == "p1");
  CHECK(m.system.var_names[2 + n] == "z1");
  CHECK(m.system.var_names.back() == "p");
  CHECK_FALSE(m.system.c1.empty());
  CHECK(m.system.differential_count() == 2 * n + 2);
  for (std::size_t k = 0; k < n; ++k) CHECK(mass_entries_in_row(m.system, 2 + n + k) == 2);
  CHECK(m.positive_vars == std::vector<std::size_t>{2 * n + 3});

  const ClarinetParams defaults;
  CHECK(defaults.l == 0.22);
  CHECK(defaults.zeta == 0.2);
  CHECK(defaults.omegas.size() == defaults.alphas.size());
}

TEST_CASE("clarinet rest state satisfies the recast at every lambda") {
  const auto m = clarinet();
  for (double lambda : {0.1, 0.4, 0.8}) {
    const auto z = m.equilibrium_guess(lambda);
    CHECK(max_abs_diff(steady_residual(m, z, lambda), std::vector<double>(z.size(), 0.0)) <= 1e-12);
    const auto lifted = m.original.lift(0.0, std::vector<double>(m.original.dim, 0.0), lambda);
    CHECK(max_abs_diff(lifted, z) <= 1e-14);
  }
}

TEST_CASE("duffing structure") {
  const auto m = duffing();
  CHECK(m.system.n_eq == 3);
  CHECK(m.system.forced());
  CHECK(m.system.c1.empty());
  CHECK(m.system.l1.empty());
  bool found = false;
  for (const auto& e : m.system.c0.entries) {
    if (e.harmonic == 1 && e.phase == Phase::Cos && e.equation == 1 && e.value == 1.25) found = true;
  }
  CHECK(found);
  CHECK(m.system.l0.coeff(1, 1) == doctest::Approx(-0.2));
  CHECK(m.basis.forcing_multiple == 1);
}

TEST_CASE("rayleigh-plesset structure") {
  const auto m = rayleigh_plesset(1.0, 0.1);
  CHECK(m.system.n_eq == 6);
  CHECK(m.system.differential_count() == 2);
  CHECK(m.system.forced());
  bool forcing_on_r = false;
  for (const auto& e : m.system.c0.entries) forcing_on_r |= (e.harmonic == 1 && e.equation == 5);
  CHECK(forcing_on_r);
  bool y_squared = false;
  for (const auto& q : m.system.quad) y_squared |= (q.equation == 1 && q.first == 3 && q.second == 3 && q.coefficient == 1.0);
  CHECK(y_squared);

  // Bubble at rest: u = 1 is the unforced steady state.
  const auto z = m.equilibrium_guess(0.5);
  const auto r = steady_residual(m, z, 0.5);
  for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(r[i]) <= 1e-14);
}

TEST_CASE("biochemical system reproduces the rational equations") {
  const auto m = biochem();
  CHECK(m.mu == 0.05);
  CHECK(m.system.n_res == 6);
  CHECK(m.system.lambda_index == std::optional<std::size_t>{6});
  CHECK(m.system.constant == std::vector<double>{0.0, -0.05, 0.0, 0.0, -1.0, -1.0});

  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const double u1 = rng.uniform(0.0, 10.0);
    const double u2 = rng.uniform(0.0, 10.0);
    const double lambda = rng.uniform(-10.0, 150.0);
    const auto lifted = m.lift(u1, u2, lambda);
    const Eigen::VectorXd r = residual_of<double>(m.system, lifted);
    const auto expected = m.original_residual(u1, u2, lambda);
    CHECK(std::abs(r[0] - expected[0]) <= 1e-10 * (1.0 + std::abs(expected[0])));
    CHECK(std::abs(r[1] - expected[1]) <= 1e-10 * (1.0 + std::abs(expected[1])));
    for (int i = 2; i < 6; ++i) CHECK(std::abs(r[i]) <= 1e-12);
  }
}

TEST_CASE("configured models") {
  const auto d = model_from_config("duffing", {{"mu", 0.2}, {"f", 0.5}});
  CHECK(d.system.l0.coeff(1, 1) == doctest::Approx(-0.4));
  const auto c = model_from_config("clarinet", {{"l", 0.2}});
  const auto c0 = clarinet();
  CHECK_FALSE(c.system == c0.system);
  const auto r = model_from_config("rossler", {{"b", 0.4}});
  CHECK(r.system.c0.entries[0].value == 0.4);
  CHECK(model_from_config("vdp", nlohmann::json::object()).system == vdp().system);

  CHECK_THROWS_AS(model_from_config("duffing", {{"omega", 1.0}}), ConfigError);
  CHECK_THROWS_AS(model_from_config("duffing", {{"mu", "fast"}}), ConfigError);
  CHECK_THROWS_AS(model_from_config("lorenz", nlohmann::json::object()), ConfigError);
  CHECK_THROWS_AS(model_from_config("clarinet", {{"omegas", {1.0, 2.0}}}), ConfigError);
  CHECK_THROWS_AS(model_by_name("vdp2"), ConfigError);
}
