#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "qhbm/error.hpp"
#include "qhbm/hbm.hpp"
#include "qhbm/quadsys.hpp"

namespace qhbm {

class IntegrationError : public Error {
 public:
  using Error::Error;
};

using OdeRhs = std::function<void(double t, std::span<const double> y, std::span<double> dydt)>;

struct IntegratorOptions {
  double rtol = 1e-9;
  double atol = 1e-12;
  double initial_step = 0.0;
  double max_step = HUGE_VAL;
  std::size_t max_steps = 20'000'000;
  /// Keep every accepted step (needed for dense output).
  bool record = true;
  /// When positive, take steps of this size without error control.
  double fixed_step = 0.0;
};

/// Accepted steps of an integration with cubic Hermite dense output.
class Trajectory {
 public:
  std::vector<double> t;
  std::vector<std::vector<double>> y;
  std::vector<std::vector<double>> dy;
  std::size_t rejected_steps = 0;

  std::size_t dim() const { return y.empty() ? 0 : y.front().size(); }
  double t_begin() const { return t.front(); }
  double t_end() const { return t.back(); }
  const std::vector<double>& final_state() const { return y.back(); }
  /// Hermite interpolation; t must lie inside [t_begin, t_end].
  std::vector<double> sample(double time) const;
  /// Upward crossings of y[var] through `level`, located on the interpolant.
  std::vector<double> upward_crossings(std::size_t var, double level) const;
};

/// Dormand-Prince 5(4) with proportional-integral step control.
Trajectory integrate(const OdeRhs& rhs, std::vector<double> y0, double t0, double t1,
                     const IntegratorOptions& opts = {});

/// Pre-recast dynamics of a model: Ydot = f(t, Y, lambda), and the map from the
/// state Y to the recast vector Z. `lambda` is the forcing frequency for forced
/// models.
struct OriginalOde {
  std::size_t dim = 0;
  std::function<void(double t, std::span<const double> y, double lambda, std::span<double> dydt)> rhs;
  std::function<std::vector<double>(double t, std::span<const double> y, double lambda)> lift;
  /// dZ/dt along the flow; may be empty.
  std::function<std::vector<double>(double t, std::span<const double> y, double lambda)> lift_rate;
  /// Position of each state component inside Z.
  std::vector<std::size_t> state_indices;

  OdeRhs bind(double lambda) const;
  std::vector<double> state_of(std::span<const double> z) const;
};

/// Integrates the differential rows of a recast system directly, solving the
/// algebraic rows pointwise in dependency order. Each algebraic row must
/// define one new variable linearly in terms of already known ones, and the
/// mass matrix must act only on the differential variables.
OriginalOde make_recast_ode(const QuadraticSystem& sys);

struct Projection {
  HarmonicVector coefficients;
  double omega = 0.0;
};

/// Trigonometric projection of one full period [t0, t0 + period] sampled at
/// `samples` equispaced points (default 4H + 2). The basis fundamental is
/// omega / 2^K with omega = 2^K * 2 pi / period.
Projection dft_project(const std::function<std::vector<double>(double)>& signal, double t0, double period,
                       const HarmonicBasis& basis, std::size_t samples = 0);

/// Projection of the recast vector Z(t) = lift(Y(t)) along a trajectory.
Projection dft_project(const Trajectory& traj, const OriginalOde& ode, double lambda, double t0, double period,
                       const HarmonicBasis& basis, std::size_t samples = 0);

struct PeriodicityOptions {
  double rtol = 1e-12;
  double atol = 1e-14;
};

/// Integrates from the synthesized state at t = 0 over one full period
/// 2 pi 2^K / omega and returns ||Y(T) - Y(0)|| / (1 + ||Y(0)||).
double periodicity_error(const OriginalOde& ode, const HarmonicVector& u, double omega, double lambda,
                         const PeriodicityOptions& opts = {});
double periodicity_error(const QuadraticSystem& sys, const HarmonicVector& u, double omega, double lambda,
                         const PeriodicityOptions& opts = {});

struct LimitCycle {
  double period = 0.0;
  double t_start = 0.0;
  Trajectory trajectory;
};

/// Integrates past transients, then measures the return time of `returns`
/// upward crossings of state variable `section_var` through `level`.
LimitCycle find_limit_cycle(const OriginalOde& ode, double lambda, std::vector<double> y0, double settle_time,
                            std::size_t section_var, double level, int returns = 1,
                            const IntegratorOptions& opts = {});

}  // namespace qhbm
