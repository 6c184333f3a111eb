#include "qhbm/oracle.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <Eigen/Dense>

namespace qhbm {

// ---------------------------------------------------------------------------
// Trajectory

std::vector<double> Trajectory::sample(double time) const {
  if (t.empty()) throw IntegrationError("empty trajectory");
  if (time < t.front() || time > t.back()) throw std::out_of_range("sample time outside trajectory");
  auto it = std::upper_bound(t.begin(), t.end(), time);
  std::size_t i = it == t.begin() ? 0 : static_cast<std::size_t>(it - t.begin()) - 1;
  if (i + 1 >= t.size()) return y.back();
  const double h = t[i + 1] - t[i];
  const double s = (time - t[i]) / h;
  const double s2 = s * s;
  const double s3 = s2 * s;
  const double h00 = 2 * s3 - 3 * s2 + 1;
  const double h10 = s3 - 2 * s2 + s;
  const double h01 = -2 * s3 + 3 * s2;
  const double h11 = s3 - s2;
  std::vector<double> out(dim());
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = h00 * y[i][k] + h10 * h * dy[i][k] + h01 * y[i + 1][k] + h11 * h * dy[i + 1][k];
  }
  return out;
}

std::vector<double> Trajectory::upward_crossings(std::size_t var, double level) const {
  std::vector<double> out;
  for (std::size_t i = 0; i + 1 < t.size(); ++i) {
    const double f0 = y[i][var] - level;
    const double f1 = y[i + 1][var] - level;
    if (!(f0 < 0.0 && f1 >= 0.0)) continue;
    double lo = t[i];
    double hi = t[i + 1];
    for (int it = 0; it < 80 && hi - lo > 0.0; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (sample(mid)[var] - level < 0.0) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    out.push_back(0.5 * (lo + hi));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dormand-Prince 5(4)

namespace {

constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784, a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

double scaled_norm(std::span<const double> v, std::span<const double> ya, std::span<const double> yb,
                   const IntegratorOptions& o) {
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double sc = o.atol + o.rtol * std::max(std::abs(ya[i]), std::abs(yb[i]));
    sum += (v[i] / sc) * (v[i] / sc);
  }
  return std::sqrt(sum / static_cast<double>(std::max<std::size_t>(v.size(), 1)));
}

}  // namespace

Trajectory integrate(const OdeRhs& rhs, std::vector<double> y0, double t0, double t1, const IntegratorOptions& opts) {
  const std::size_t n = y0.size();
  if (!(t1 > t0)) throw std::invalid_argument("integrate: t1 must exceed t0");
  Trajectory traj;
  std::vector<double> f0(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), ytmp(n), ynew(n), err(n);
  double t = t0;
  std::vector<double> y = std::move(y0);
  rhs(t, y, f0);

  auto push = [&](double tt, const std::vector<double>& yy, const std::vector<double>& ff) {
    if (!opts.record && traj.t.size() >= 2) {
      traj.t.back() = tt;
      traj.y.back() = yy;
      traj.dy.back() = ff;
      return;
    }
    traj.t.push_back(tt);
    traj.y.push_back(yy);
    traj.dy.push_back(ff);
  };
  push(t, y, f0);

  double h = opts.fixed_step > 0.0 ? opts.fixed_step : opts.initial_step;
  if (!(h > 0.0)) {
    const std::vector<double> zero(n, 0.0);
    const double d0 = scaled_norm(y, y, zero, opts);
    const double d1 = scaled_norm(f0, y, zero, opts);
    h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  }
  h = std::min({h, opts.max_step, t1 - t0});

  double err_prev = 1e-4;
  const double safety = 0.9;
  const double alpha = 0.7 / 5.0;
  const double beta = 0.4 / 5.0;
  for (std::size_t step = 0; step < opts.max_steps; ++step) {
    if (t >= t1) return traj;
    bool last = false;
    if (t + h >= t1) {
      h = t1 - t;
      last = true;
    }
    if (h < 16 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t))) {
      throw IntegrationError("step size underflow at t = " + std::to_string(t) + " (stiff or singular dynamics)");
    }
    for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + h * a21 * f0[i];
    rhs(t + c2 * h, ytmp, k2);
    for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + h * (a31 * f0[i] + a32 * k2[i]);
    rhs(t + c3 * h, ytmp, k3);
    for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + h * (a41 * f0[i] + a42 * k2[i] + a43 * k3[i]);
    rhs(t + c4 * h, ytmp, k4);
    for (std::size_t i = 0; i < n; ++i) {
      ytmp[i] = y[i] + h * (a51 * f0[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
    }
    rhs(t + c5 * h, ytmp, k5);
    for (std::size_t i = 0; i < n; ++i) {
      ytmp[i] = y[i] + h * (a61 * f0[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
    }
    rhs(t + h, ytmp, k6);
    for (std::size_t i = 0; i < n; ++i) {
      ynew[i] = y[i] + h * (a71 * f0[i] + a73 * k3[i] + a74 * k4[i] + a75 * k5[i] + a76 * k6[i]);
    }
    rhs(t + h, ynew, k7);
    for (std::size_t i = 0; i < n; ++i) {
      err[i] = h * (e1 * f0[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
    }
    const double e = opts.fixed_step > 0.0 ? 0.0 : scaled_norm(err, y, ynew, opts);
    if (!std::isfinite(e)) {
      h *= 0.25;
      ++traj.rejected_steps;
      continue;
    }
    if (e <= 1.0) {
      double factor = e == 0.0 ? 5.0 : safety * std::pow(e, -alpha) * std::pow(err_prev, beta);
      factor = std::clamp(factor, 0.2, 5.0);
      err_prev = std::max(e, 1e-4);
      t = last ? t1 : t + h;
      y.swap(ynew);
      f0.swap(k7);
      push(t, y, f0);
      if (last) return traj;
      h = opts.fixed_step > 0.0 ? opts.fixed_step : std::min(h * factor, opts.max_step);
    } else {
      ++traj.rejected_steps;
      h *= std::max(0.2, safety * std::pow(e, -0.2));
    }
  }
  throw IntegrationError("integrate: step budget exhausted");
}

// ---------------------------------------------------------------------------
// Original / recast dynamics

OdeRhs OriginalOde::bind(double lambda) const {
  return [this, lambda](double t, std::span<const double> y, std::span<double> dy) { rhs(t, y, lambda, dy); };
}

std::vector<double> OriginalOde::state_of(std::span<const double> z) const {
  std::vector<double> y;
  y.reserve(state_indices.size());
  for (auto i : state_indices) y.push_back(z[i]);
  return y;
}

namespace {

struct AlgebraicStep {
  std::size_t row;
  std::size_t var;
};

struct RecastPlan {
  QuadraticSystem sys;
  std::vector<std::size_t> diff_vars;
  std::vector<std::size_t> diff_rows;
  Eigen::MatrixXd mass_inverse;
  std::vector<AlgebraicStep> steps;

  std::vector<double> complete(double t, std::span<const double> y, double lambda) const {
    const std::size_t n = sys.n_eq;
    std::vector<double> z(n, 0.0);
    for (std::size_t i = 0; i < diff_vars.size(); ++i) z[diff_vars[i]] = y[i];
    for (const auto& s : steps) {
      // Row value with z[var] = 0 gives the remainder; the coefficient of var is linear.
      std::vector<double> c(n, 0.0);
      sys.c0.accumulate(t, lambda, c);
      sys.c1.accumulate(t, lambda, c, lambda);
      double rest = c[s.row];
      double coef = 0.0;
      for (const auto& e : sys.l0.entries()) {
        if (e.row != s.row) continue;
        if (e.col == s.var) coef += e.value; else rest += e.value * z[e.col];
      }
      for (const auto& e : sys.l1.entries()) {
        if (e.row != s.row) continue;
        if (e.col == s.var) coef += lambda * e.value; else rest += lambda * e.value * z[e.col];
      }
      for (const auto& q : sys.quad) {
        if (q.equation != s.row) continue;
        if (q.first == s.var) {
          coef += q.coefficient * z[q.second];
        } else if (q.second == s.var) {
          coef += q.coefficient * z[q.first];
        } else {
          rest += q.coefficient * z[q.first] * z[q.second];
        }
      }
      if (coef == 0.0) throw IntegrationError("algebraic row " + std::to_string(s.row) + " is singular");
      z[s.var] = -rest / coef;
    }
    return z;
  }
};

}  // namespace

OriginalOde make_recast_ode(const QuadraticSystem& sys) {
  const std::size_t n = sys.n_eq;
  auto plan = std::make_shared<RecastPlan>();
  plan->sys = sys;
  std::vector<bool> known(n, false);
  for (const auto& e : sys.mass.entries()) {
    if (!known[e.col]) {
      known[e.col] = true;
    }
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (known[k]) plan->diff_vars.push_back(k);
    if (sys.differential_mask[k]) plan->diff_rows.push_back(k);
  }
  if (plan->diff_vars.size() != plan->diff_rows.size()) {
    throw ConfigError("recast integration needs the mass matrix to act on as many variables as it has rows");
  }
  const auto nd = static_cast<Eigen::Index>(plan->diff_vars.size());
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(nd, nd);
  for (const auto& e : sys.mass.entries()) {
    const auto r = std::find(plan->diff_rows.begin(), plan->diff_rows.end(), e.row) - plan->diff_rows.begin();
    const auto c = std::find(plan->diff_vars.begin(), plan->diff_vars.end(), e.col) - plan->diff_vars.begin();
    m(r, c) += e.value;
  }
  Eigen::FullPivLU<Eigen::MatrixXd> mlu(m);
  if (!mlu.isInvertible()) throw ConfigError("mass matrix restricted to differential variables is singular");
  plan->mass_inverse = mlu.inverse();

  // Order the algebraic rows so that each one introduces a single new variable.
  std::vector<bool> solved(n, false);
  for (auto r : plan->diff_rows) solved[r] = true;
  bool progress = true;
  while (progress) {
    progress = false;
    for (std::size_t row = 0; row < n; ++row) {
      if (solved[row]) continue;
      std::vector<std::size_t> unknown;
      auto note = [&](std::size_t v) {
        if (!known[v] && std::find(unknown.begin(), unknown.end(), v) == unknown.end()) unknown.push_back(v);
      };
      bool nonlinear = false;
      for (const auto* l : {&sys.l0, &sys.l1}) {
        for (const auto& e : l->entries()) {
          if (e.row == row) note(e.col);
        }
      }
      for (const auto& q : sys.quad) {
        if (q.equation != row) continue;
        note(q.first);
        note(q.second);
        if (!known[q.first] && !known[q.second]) nonlinear = true;
      }
      if (unknown.size() == 1 && !nonlinear) {
        plan->steps.push_back({row, unknown.front()});
        known[unknown.front()] = true;
        solved[row] = true;
        progress = true;
      }
    }
  }
  for (std::size_t row = 0; row < n; ++row) {
    if (!solved[row]) {
      throw ConfigError("algebraic row " + std::to_string(row) + " cannot be solved pointwise for a single variable");
    }
  }

  OriginalOde ode;
  ode.dim = plan->diff_vars.size();
  ode.state_indices = plan->diff_vars;
  ode.lift = [plan](double t, std::span<const double> y, double lambda) { return plan->complete(t, y, lambda); };
  ode.rhs = [plan](double t, std::span<const double> y, double lambda, std::span<double> dy) {
    const auto z = plan->complete(t, y, lambda);
    const auto& s = plan->sys;
    std::vector<double> f(s.n_eq, 0.0);
    s.c0.accumulate(t, lambda, f);
    s.c1.accumulate(t, lambda, f, lambda);
    s.l0.multiply_add<double>(z, f);
    s.l1.multiply_add<double>(z, f, lambda);
    accumulate_quadratic<double>(s.quad, z, z, f);
    const auto nd2 = static_cast<Eigen::Index>(plan->diff_rows.size());
    Eigen::VectorXd fr(nd2);
    for (Eigen::Index i = 0; i < nd2; ++i) fr[i] = f[plan->diff_rows[static_cast<std::size_t>(i)]];
    const Eigen::VectorXd yd = plan->mass_inverse * fr;
    for (Eigen::Index i = 0; i < nd2; ++i) dy[static_cast<std::size_t>(i)] = yd[i];
  };
  return ode;
}

// ---------------------------------------------------------------------------
// Projection and periodicity

Projection dft_project(const std::function<std::vector<double>(double)>& signal, double t0, double period,
                       const HarmonicBasis& basis, std::size_t samples) {
  const std::size_t minimum = 4 * static_cast<std::size_t>(basis.harmonics) + 2;
  if (samples == 0) samples = minimum;
  if (samples < minimum) {
    throw std::invalid_argument("dft_project: " + std::to_string(samples) + " samples < 4H+2 = " +
                                std::to_string(minimum));
  }
  if (!(period > 0.0)) throw std::invalid_argument("dft_project: period must be positive");
  HarmonicVector u(basis);
  const double m = static_cast<double>(samples);
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t j = 0; j < samples; ++j) {
    const auto z = signal(t0 + period * static_cast<double>(j) / m);
    if (z.size() != basis.n_eq) throw DimensionError("dft_project: signal length differs from n_eq");
    auto z0 = u.block(0);
    for (std::size_t i = 0; i < basis.n_eq; ++i) z0[i] += z[i] / m;
    for (int k = 1; k <= basis.harmonics; ++k) {
      const double arg = two_pi * k * static_cast<double>(j) / m;
      const double c = 2.0 * std::cos(arg) / m;
      const double s = 2.0 * std::sin(arg) / m;
      auto zc = u.block(k, Phase::Cos);
      auto zs = u.block(k, Phase::Sin);
      for (std::size_t i = 0; i < basis.n_eq; ++i) {
        zc[i] += c * z[i];
        zs[i] += s * z[i];
      }
    }
  }
  return {std::move(u), basis.grid_divisor() * two_pi / period};
}

Projection dft_project(const Trajectory& traj, const OriginalOde& ode, double lambda, double t0, double period,
                       const HarmonicBasis& basis, std::size_t samples) {
  return dft_project(
      [&](double t) {
        const auto y = traj.sample(t);
        // The time origin of the projection is t0; forcing phase uses absolute time.
        return ode.lift(t, y, lambda);
      },
      t0, period, basis, samples);
}

double periodicity_error(const OriginalOde& ode, const HarmonicVector& u, double omega, double lambda,
                         const PeriodicityOptions& opts) {
  const double period = 2.0 * std::numbers::pi * u.basis().grid_divisor() / omega;
  const auto z0 = synthesize(u, omega, 0.0);
  const auto y0 = ode.state_of(z0);
  IntegratorOptions io;
  io.rtol = opts.rtol;
  io.atol = opts.atol;
  io.record = false;
  const auto traj = integrate(ode.bind(lambda), y0, 0.0, period, io);
  const auto& yt = traj.final_state();
  double gap = 0.0;
  double norm0 = 0.0;
  for (std::size_t i = 0; i < y0.size(); ++i) {
    gap += (yt[i] - y0[i]) * (yt[i] - y0[i]);
    norm0 += y0[i] * y0[i];
  }
  return std::sqrt(gap) / (1.0 + std::sqrt(norm0));
}

double periodicity_error(const QuadraticSystem& sys, const HarmonicVector& u, double omega, double lambda,
                         const PeriodicityOptions& opts) {
  return periodicity_error(make_recast_ode(sys), u, omega, lambda, opts);
}

LimitCycle find_limit_cycle(const OriginalOde& ode, double lambda, std::vector<double> y0, double settle_time,
                            std::size_t section_var, double level, int returns, const IntegratorOptions& opts) {
  if (returns < 1) throw std::invalid_argument("find_limit_cycle: returns must be >= 1");
  const auto f = ode.bind(lambda);
  std::vector<double> y = std::move(y0);
  double t = 0.0;
  if (settle_time > 0.0) {
    IntegratorOptions quiet = opts;
    quiet.record = false;
    y = integrate(f, y, 0.0, settle_time, quiet).final_state();
    t = settle_time;
  }
  double span = std::max(1.0, settle_time / 8.0);
  for (int attempt = 0; attempt < 12; ++attempt, span *= 2.0) {
    auto traj = integrate(f, y, t, t + span, opts);
    const auto crossings = traj.upward_crossings(section_var, level);
    if (crossings.size() >= static_cast<std::size_t>(returns) + 1) {
      LimitCycle lc;
      lc.t_start = crossings[0];
      lc.period = crossings[static_cast<std::size_t>(returns)] - crossings[0];
      lc.trajectory = std::move(traj);
      return lc;
    }
  }
  throw IntegrationError("find_limit_cycle: no recurrent section crossings found");
}

}  // namespace qhbm
