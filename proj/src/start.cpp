#include "qhbm/start.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace qhbm {

namespace {

Eigen::MatrixXd dense(const SparseMatrix& m, std::size_t n) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (const auto& e : m.entries()) out(e.row, e.col) += e.value;
  return out;
}

/// Jacobian of c + l(Z) + q(Z, Z) at Z.
Eigen::MatrixXd steady_jacobian(const QuadraticSystem& sys, double lambda, std::span<const double> z) {
  Eigen::MatrixXd j = dense(sys.l0, sys.n_eq) + lambda * dense(sys.l1, sys.n_eq);
  for (const auto& q : sys.quad) {
    j(q.equation, q.first) += q.coefficient * z[q.second];
    j(q.equation, q.second) += q.coefficient * z[q.first];
  }
  return j;
}

Eigen::VectorXd steady_residual(const QuadraticSystem& sys, double lambda, std::span<const double> z) {
  std::vector<double> f(sys.n_eq, 0.0);
  for (const auto* c : {&sys.c0, &sys.c1}) {
    const double scale = c == &sys.c1 ? lambda : 1.0;
    for (const auto& e : c->entries) {
      if (e.harmonic == 0) f[e.equation] += scale * e.value;
    }
  }
  sys.l0.multiply_add<double>(z, f);
  sys.l1.multiply_add<double>(z, f, lambda);
  accumulate_quadratic<double>(sys.quad, z, z, f);
  return Eigen::Map<Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(f.size()));
}

std::size_t phase_variable(const Model& model) {
  return model.phase ? model.phase->variable : default_phase(model.system).variable;
}

std::size_t pinned_index(const LiftedSystem& ls) {
  if (ls.forced()) return *ls.omega_index;
  if (!ls.lambda_index) throw ConfigError("lifted system has no lambda unknown");
  return *ls.lambda_index;
}

StartPoint finish(const LiftedSystem& ls, const Eigen::VectorXd& guess, std::size_t fixed, double tolerance) {
  const auto res = newton_correct(ls, guess, fixed, tolerance);
  return {res.u, res.iterations, res.residual_norm};
}

}  // namespace

std::vector<double> equilibrium(const QuadraticSystem& sys, double lambda, std::vector<double> guess,
                                double tolerance, int max_iterations) {
  if (guess.size() != sys.n_eq) throw DimensionError("equilibrium: guess length differs from n_eq");
  for (int it = 0; it <= max_iterations; ++it) {
    const Eigen::VectorXd r = steady_residual(sys, lambda, guess);
    if (r.norm() <= tolerance) return guess;
    const Eigen::VectorXd dz = steady_jacobian(sys, lambda, guess).fullPivLu().solve(-r);
    if (!dz.allFinite()) break;
    for (std::size_t i = 0; i < guess.size(); ++i) guess[i] += dz[static_cast<Eigen::Index>(i)];
  }
  throw ConvergenceError("equilibrium: Newton did not converge at lambda = " + std::to_string(lambda));
}

StartPoint start_from_oracle(const Model& model, const LiftedSystem& ls, const HarmonicBasis& basis,
                             double parameter, double tolerance) {
  const auto& ode = model.original;
  if (!ode.rhs) throw ConfigError("model '" + model.name + "' has no time-domain dynamics");
  const auto& st = model.start;
  std::vector<double> y0 = st.initial_state;
  if (y0.size() != ode.dim) throw ConfigError("oracle start state has the wrong length");

  if (basis.forcing_multiple) {
    const double lambda = parameter;
    const double omega = lambda / *basis.forcing_multiple;
    const double forcing_period = 2.0 * std::numbers::pi / lambda;
    const double settle = std::ceil(st.settle_time / forcing_period) * forcing_period;
    IntegratorOptions quiet;
    quiet.record = false;
    if (settle > 0.0) y0 = integrate(ode.bind(lambda), y0, 0.0, settle, quiet).final_state();
    const double period = 2.0 * std::numbers::pi * basis.grid_divisor() / omega;
    const auto traj = integrate(ode.bind(lambda), y0, 0.0, period);
    const auto proj = dft_project(traj, ode, lambda, 0.0, period, basis, 8 * static_cast<std::size_t>(basis.harmonics) + 8);
    return finish(ls, Eigen::Map<const Eigen::VectorXd>(extended_point(ls, proj.coefficients, lambda, omega).data(),
                                                         static_cast<Eigen::Index>(ls.n_unknown())),
                  pinned_index(ls), tolerance);
  }

  const double lambda = parameter;
  const int returns = basis.grid_divisor();
  const auto lc = find_limit_cycle(ode, lambda, y0, st.settle_time, st.section_var, st.section_level, returns);
  const double period = lc.period;
  const double omega = returns * 2.0 * std::numbers::pi / period;
  const auto traj = integrate(ode.bind(lambda), lc.trajectory.sample(lc.t_start), 0.0, 2.0 * period);
  const std::size_t samples = 8 * static_cast<std::size_t>(basis.harmonics) + 8;
  auto proj = dft_project(traj, ode, lambda, 0.0, period, basis, samples);

  // Move the time origin so that the sine coefficient of the phase variable
  // on the physical fundamental vanishes.
  const std::size_t var = phase_variable(model);
  const int slot = model.phase && model.phase->harmonic > 0 ? model.phase->harmonic : basis.fundamental_slot();
  const double zc = proj.coefficients.block(slot, Phase::Cos)[var];
  const double zs = proj.coefficients.block(slot, Phase::Sin)[var];
  const double mean = proj.coefficients.block(0)[var];
  if (std::hypot(zc, zs) <= 1e-8 * std::max(1.0, std::abs(mean))) {
    throw ConvergenceError("oracle run settled onto a steady state at lambda = " + std::to_string(lambda));
  }
  double phi = std::atan2(zs, zc);
  if (phi < 0.0) phi += 2.0 * std::numbers::pi;
  const double shift = phi / (slot * omega / basis.grid_divisor());
  proj = dft_project(traj, ode, lambda, shift, period, basis, samples);

  const auto u = extended_point(ls, proj.coefficients, lambda, omega);
  return finish(ls, Eigen::Map<const Eigen::VectorXd>(u.data(), static_cast<Eigen::Index>(u.size())),
                pinned_index(ls), tolerance);
}

StartPoint start_from_rest(const Model& model, const LiftedSystem& ls, const HarmonicBasis& basis, double omega,
                           double tolerance) {
  if (!basis.forcing_multiple) throw ConfigError("start_from_rest needs a forced model");
  auto guess = model.equilibrium_guess ? model.equilibrium_guess(0.0) : std::vector<double>(model.system.n_eq, 0.0);
  const auto z = equilibrium(model.system, 0.0, guess);
  HarmonicVector u(basis);
  std::copy(z.begin(), z.end(), u.block(0).begin());
  const auto x = extended_point(ls, u, omega * *basis.forcing_multiple, omega);
  return finish(ls, Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())),
                pinned_index(ls), tolerance);
}

std::vector<std::complex<double>> linear_spectrum(const QuadraticSystem& sys, double lambda,
                                                  const std::vector<double>& steady_state) {
  const Eigen::MatrixXd a = steady_jacobian(sys, lambda, steady_state);
  const Eigen::MatrixXd m = dense(sys.mass, sys.n_eq);
  Eigen::GeneralizedEigenSolver<Eigen::MatrixXd> ges(a, m);
  if (ges.info() != Eigen::Success) throw ConvergenceError("linear_spectrum: QZ iteration failed");
  std::vector<std::complex<double>> out;
  for (Eigen::Index i = 0; i < ges.betas().size(); ++i) {
    const double beta = ges.betas()[i];
    const std::complex<double> alpha = ges.alphas()[i];
    if (std::abs(beta) > 1e-12 * std::max(1.0, std::abs(alpha))) out.push_back(alpha / beta);
  }
  return out;
}

namespace {

struct SpectrumProbe {
  double growth = -HUGE_VAL;
  double frequency = 0.0;
};

SpectrumProbe leading_oscillatory(const QuadraticSystem& sys, double lambda, const std::vector<double>& z,
                                  const HopfSearch& band) {
  SpectrumProbe p;
  for (const auto& s : linear_spectrum(sys, lambda, z)) {
    if (s.imag() > 1e-9 && s.imag() >= band.freq_lo && s.imag() <= band.freq_hi && s.real() > p.growth) {
      p.growth = s.real();
      p.frequency = s.imag();
    }
  }
  return p;
}

}  // namespace

HopfPoint locate_hopf(const Model& model, const HopfSearch& search, double tolerance) {
  const auto& sys = model.system;
  const double lo = search.lambda_lo;
  const double hi = search.lambda_hi;
  const int steps = search.steps;
  auto guess_at = [&](double lambda) {
    return model.equilibrium_guess ? model.equilibrium_guess(lambda) : std::vector<double>(sys.n_eq, 0.0);
  };
  std::vector<double> z = equilibrium(sys, lo, guess_at(lo));
  double prev_lambda = lo;
  auto prev = leading_oscillatory(sys, lo, z, search);
  for (int i = 1; i <= steps; ++i) {
    const double lambda = lo + (hi - lo) * i / steps;
    auto zi = equilibrium(sys, lambda, z);
    const auto probe = leading_oscillatory(sys, lambda, zi, search);
    if ((prev.growth < 0.0) != (probe.growth < 0.0)) {
      double a = prev_lambda;
      double b = lambda;
      double ga = prev.growth;
      std::vector<double> za = z;
      while (b - a > tolerance * std::max(1.0, std::abs(b))) {
        const double mid = 0.5 * (a + b);
        const auto zm = equilibrium(sys, mid, za);
        const double gm = leading_oscillatory(sys, mid, zm, search).growth;
        if ((gm < 0.0) == (ga < 0.0)) {
          a = mid;
          ga = gm;
          za = zm;
        } else {
          b = mid;
        }
      }
      HopfPoint h;
      h.lambda = 0.5 * (a + b);
      h.equilibrium = equilibrium(sys, h.lambda, za);
      h.omega = leading_oscillatory(sys, h.lambda, h.equilibrium, search).frequency;

      // Critical mode: null vector of A - i omega m.
      const auto n = static_cast<Eigen::Index>(sys.n_eq);
      Eigen::MatrixXcd pencil = steady_jacobian(sys, h.lambda, h.equilibrium).cast<std::complex<double>>();
      pencil -= std::complex<double>(0.0, h.omega) * dense(sys.mass, sys.n_eq).cast<std::complex<double>>();
      Eigen::JacobiSVD<Eigen::MatrixXcd> svd(pencil, Eigen::ComputeFullV);
      Eigen::VectorXcd phi = svd.matrixV().col(n - 1);
      const auto k = static_cast<Eigen::Index>(phase_variable(model));
      if (std::abs(phi[k]) == 0.0) throw SingularPointError("locate_hopf: critical mode vanishes on the phase variable");
      phi /= phi[k];
      h.mode.assign(phi.data(), phi.data() + n);
      return h;
    }
    prev = probe;
    prev_lambda = lambda;
    z = std::move(zi);
  }
  throw ConvergenceError("locate_hopf: no oscillatory instability in [" + std::to_string(lo) + ", " +
                         std::to_string(hi) + "]");
}

StartPoint start_from_hopf(const Model& model, const LiftedSystem& ls, const HarmonicBasis& basis,
                           const HopfPoint& hopf, double amplitude, double tolerance) {
  if (basis.forcing_multiple) throw ConfigError("Hopf seeding applies to autonomous models only");
  HarmonicVector u(basis);
  const int slot = basis.fundamental_slot();
  auto z0 = u.block(0);
  auto zc = u.block(slot, Phase::Cos);
  auto zs = u.block(slot, Phase::Sin);
  for (std::size_t i = 0; i < basis.n_eq; ++i) {
    z0[i] = hopf.equilibrium[i];
    zc[i] = amplitude * hopf.mode[i].real();
    zs[i] = -amplitude * hopf.mode[i].imag();
  }
  const auto x = extended_point(ls, u, hopf.lambda, hopf.omega);
  const std::size_t fixed = basis.offset(slot, Phase::Cos) + phase_variable(model);
  return finish(ls, Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())), fixed,
                tolerance);
}

double min_over_period(const LiftedSystem& ls, const HarmonicBasis& basis, const Eigen::VectorXd& u,
                       std::size_t var, int samples) {
  const std::span<const double> x(u.data(), static_cast<std::size_t>(u.size()));
  const auto hv = harmonic_part(ls, basis, x);
  const double omega = ls.omega_of(x);
  const double period = 2.0 * std::numbers::pi * basis.grid_divisor() / omega;
  double lo = HUGE_VAL;
  for (int j = 0; j < samples; ++j) lo = std::min(lo, synthesize(hv, omega, period * j / samples).at(var));
  return lo;
}

StopPredicate positivity_stop(const LiftedSystem& ls, const HarmonicBasis& basis, std::vector<std::size_t> vars,
                              int samples) {
  if (vars.empty()) return nullptr;
  return [&ls, basis, vars = std::move(vars), samples](const Branch& branch) {
    const auto& end = branch.sections.back().end;
    for (auto v : vars) {
      if (min_over_period(ls, basis, end, v, samples) <= 0.0) return true;
    }
    return false;
  };
}

}  // namespace qhbm
