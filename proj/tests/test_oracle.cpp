#include <doctest.h>

#include <cmath>
#include <numbers>

#include "qhbm/models.hpp"
#include "qhbm/oracle.hpp"
#include "qhbm/start.hpp"
#include "support.hpp"

using namespace qhbm;
using namespace qhbm::testing;

namespace {

constexpr double kPi = std::numbers::pi;

void decay(double, std::span<const double> y, std::span<double> dy) { dy[0] = -y[0]; }

void oscillator(double, std::span<const double> y, std::span<double> dy) {
  dy[0] = y[1];
  dy[1] = -y[0];
}

/// x' = y, y' = -x as a recast system.
QuadraticSystem linear_oscillator() {
  return SystemBuilder(2)
      .set_mass_entry(0, 0, 1.0)
      .set_mass_entry(1, 1, 1.0)
      .add_linear(LinearPart::L0, 0, 1, 1.0)
      .add_linear(LinearPart::L0, 1, 0, -1.0)
      .build();
}

}  // namespace

TEST_CASE("exponential decay") {
  IntegratorOptions o;
  o.rtol = 1e-9;
  const auto traj = integrate(decay, {1.0}, 0.0, 1.0, o);
  CHECK(std::abs(traj.final_state()[0] - std::exp(-1.0)) <= 1e-8);
  CHECK(traj.t_end() == 1.0);
}

TEST_CASE("harmonic oscillator keeps its energy over ten periods") {
  const auto traj = integrate(oscillator, {1.0, 0.0}, 0.0, 20 * kPi);
  const auto& y = traj.final_state();
  CHECK(std::abs(0.5 * (y[0] * y[0] + y[1] * y[1]) - 0.5) <= 1e-6);
}

TEST_CASE("fixed-step convergence order") {
  IntegratorOptions o;
  double prev = 0.0;
  for (int level = 0; level < 4; ++level) {
    o.fixed_step = 0.25 / (1 << level);
    const double err = std::abs(integrate(decay, {1.0}, 0.0, 2.0, o).final_state()[0] - std::exp(-2.0));
    if (level > 0) {
      const double order = std::log2(prev / err);
      CAPTURE(order);
      CHECK(order >= 4.0);
      CHECK(order <= 5.6);
    }
    prev = err;
  }
}

TEST_CASE("dense output and crossings") {
  const auto traj = integrate(oscillator, {0.0, 1.0}, 0.0, 5 * kPi);
  for (double t : {0.3, 2.2, 7.9}) CHECK(traj.sample(t)[0] == doctest::Approx(std::sin(t)).epsilon(1e-6));
  const auto up = traj.upward_crossings(0, 0.0);
  REQUIRE(up.size() == 2);
  CHECK(up[0] == doctest::Approx(2 * kPi).epsilon(1e-7));
  CHECK(up[1] == doctest::Approx(4 * kPi).epsilon(1e-7));
  CHECK_THROWS_AS(traj.sample(100.0), std::out_of_range);
}

TEST_CASE("unrecorded runs keep only the end points") {
  IntegratorOptions o;
  o.record = false;
  const auto traj = integrate(oscillator, {1.0, 0.0}, 0.0, 10.0, o);
  CHECK(traj.t.size() == 2);
  CHECK(traj.final_state()[0] == doctest::Approx(std::cos(10.0)).epsilon(1e-7));
}

TEST_CASE("finite-time blow-up raises an integration error") {
  auto blow = [](double, std::span<const double> y, std::span<double> dy) { dy[0] = y[0] * y[0]; };
  CHECK_THROWS_AS(integrate(blow, {1.0}, 0.0, 2.0), IntegrationError);
  CHECK_THROWS_AS(integrate(decay, {1.0}, 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("projection of a sampled cosine") {
  const double omega = 2.5;
  const HarmonicBasis b{5, 1, 0, std::nullopt};
  const auto p = dft_project([&](double t) { return std::vector<double>{std::cos(omega * t)}; }, 0.0, 2 * kPi / omega, b);
  CHECK(p.omega == doctest::Approx(omega));
  CHECK(p.coefficients.block(1, Phase::Cos)[0] == doctest::Approx(1.0).epsilon(1e-13));
  for (std::size_t i = 0; i < b.dof(); ++i) {
    if (i != b.offset(1, Phase::Cos)) CHECK(std::abs(p.coefficients.data()[i]) <= 1e-12);
  }
  CHECK_THROWS_AS(dft_project([](double) { return std::vector<double>{0.0}; }, 0.0, 1.0, b, 8), std::invalid_argument);
  CHECK_THROWS_AS(dft_project([](double) { return std::vector<double>{0.0, 1.0}; }, 0.0, 1.0, b), DimensionError);
}

TEST_CASE("projecting a synthesized signal returns its coefficients") {
  Rng rng(13);
  for (int k : {0, 1}) {
    const HarmonicBasis b{7, 3, k, std::nullopt};
    const auto u = random_harmonics(rng, b);
    const double omega = 1.4;
    const double period = 2 * kPi * b.grid_divisor() / omega;
    const auto p = dft_project([&](double t) { return synthesize(u, omega, t); }, 0.0, period, b);
    CHECK(p.omega == doctest::Approx(omega));
    CHECK(max_abs_diff(p.coefficients.data(), u.data()) <= 1e-12);
  }
}

TEST_CASE("van der pol cycle at lambda = 1 has amplitude two") {
  const auto m = vdp();
  const auto lc = find_limit_cycle(m.original, 1.0, {0.5, 0.0}, 100.0, 1, 0.0);
  const HarmonicBasis b{10, 4, 0, std::nullopt};
  const auto p = dft_project(lc.trajectory, m.original, 1.0, lc.t_start, lc.period, b);
  CHECK(p.coefficients.amplitude(0, 1) == doctest::Approx(2.0).epsilon(0.025));
  CHECK(lc.period == doctest::Approx(6.6632868).epsilon(1e-5));
}

TEST_CASE("van der pol period at lambda = 3 agrees with the balanced frequency") {
  const auto m = vdp();
  const auto lc = find_limit_cycle(m.original, 3.0, {2.0, 0.0}, 100.0, 1, 0.0);
  const HarmonicBasis b{40, 4, 0, std::nullopt};
  const auto ls = assemble(m.system, b, m.phase);
  const auto sp = start_from_oracle(m, ls, b, 3.0);
  const double omega = ls.omega_of(view(sp.u));
  CHECK(2 * kPi / lc.period == doctest::Approx(omega).epsilon(1e-6));
}

TEST_CASE("double return time on a period-one cycle") {
  const auto m = vdp();
  const auto one = find_limit_cycle(m.original, 1.0, {2.0, 0.0}, 50.0, 1, 0.0, 1);
  const auto two = find_limit_cycle(m.original, 1.0, {2.0, 0.0}, 50.0, 1, 0.0, 2);
  CHECK(two.period == doctest::Approx(2 * one.period).epsilon(1e-7));
}

TEST_CASE("periodicity error of an exact oscillator solution") {
  const auto sys = linear_oscillator();
  HarmonicVector u(HarmonicBasis{3, 2, 0, std::nullopt});
  u.block(1, Phase::Cos)[0] = 1.0;
  u.block(1, Phase::Sin)[1] = -1.0;
  CHECK(periodicity_error(sys, u, 1.0, 0.0) <= 1e-8);
  CHECK(periodicity_error(sys, u, 1.1, 0.0) > 1e-2);
}

TEST_CASE("recast integrator agrees with the original dynamics") {
  const auto m = vdp();
  const auto ode = make_recast_ode(m.system);
  CHECK(ode.dim == 2);
  const auto a = integrate(ode.bind(1.5), {1.0, 0.5}, 0.0, 10.0);
  const auto b = integrate(m.original.bind(1.5), {1.0, 0.5}, 0.0, 10.0);
  CHECK(max_abs_diff(a.final_state(), b.final_state()) <= 1e-6);
  CHECK_THROWS_AS(make_recast_ode(clarinet().system), ConfigError);
}
