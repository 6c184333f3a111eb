#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "qhbm/anm.hpp"
#include "qhbm/hbm.hpp"
#include "qhbm/models.hpp"

namespace qhbm {

/// A converged point of a lifted system, ready to start continuation.
struct StartPoint {
  Eigen::VectorXd u;
  int newton_iterations = 0;
  double residual_norm = 0.0;
};

/// Steady state c + l(Z) + q(Z, Z) = 0 at fixed lambda (forcing harmonics
/// ignored) by Newton from `guess`.
std::vector<double> equilibrium(const QuadraticSystem& sys, double lambda, std::vector<double> guess,
                                double tolerance = 1e-12, int max_iterations = 50);

/// Simulates the model's original dynamics at `parameter`, projects one
/// period on the basis (time origin shifted so the phase condition holds) and
/// Newton-corrects with lambda pinned (autonomous) or omega pinned (forced).
StartPoint start_from_oracle(const Model& model, const LiftedSystem& ls, const HarmonicBasis& basis,
                             double parameter, double tolerance = 1e-10);

/// Forced models: the steady state as zero-amplitude guess, Newton with omega pinned.
StartPoint start_from_rest(const Model& model, const LiftedSystem& ls, const HarmonicBasis& basis, double omega,
                           double tolerance = 1e-10);

struct HopfPoint {
  double lambda = 0.0;
  double omega = 0.0;
  std::vector<double> equilibrium;
  /// Critical mode phi with (A - i omega m) phi = 0, normalized so that its
  /// component on the phase variable is real and positive.
  std::vector<std::complex<double>> mode;
};

/// Eigenvalues s of the linearization A phi = s m phi about the steady state at
/// lambda, restricted to finite ones.
std::vector<std::complex<double>> linear_spectrum(const QuadraticSystem& sys, double lambda,
                                                  const std::vector<double>& steady_state);

/// Scans the lambda range in `steps` increments for a complex pair with
/// frequency inside the band crossing the imaginary axis, then bisects the
/// crossing to `tolerance`.
HopfPoint locate_hopf(const Model& model, const HopfSearch& search, double tolerance = 1e-12);

/// Seeds the periodic branch near a Hopf point: Z = Z* + eps Re(phi e^{i omega t})
/// on the fundamental, then Newton with the amplitude coordinate pinned.
StartPoint start_from_hopf(const Model& model, const LiftedSystem& ls, const HarmonicBasis& basis,
                           const HopfPoint& hopf, double amplitude, double tolerance = 1e-10);

/// Stop predicate that fires once min_t Z_var(t) <= 0 at the last section end
/// for any listed variable, checked on `samples` points of one period. The
/// predicate keeps a reference to `ls`.
StopPredicate positivity_stop(const LiftedSystem& ls, const HarmonicBasis& basis, std::vector<std::size_t> vars,
                              int samples = 64);

/// Smallest value of Z_var(t) over `samples` points of one period.
double min_over_period(const LiftedSystem& ls, const HarmonicBasis& basis, const Eigen::VectorXd& u,
                       std::size_t var, int samples = 64);

}  // namespace qhbm
