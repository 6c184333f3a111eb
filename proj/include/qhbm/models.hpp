#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qhbm/hbm.hpp"
#include "qhbm/lifted.hpp"
#include "qhbm/oracle.hpp"
#include "qhbm/quadsys.hpp"

namespace qhbm {

/// Where to start an oracle run when a branch is seeded from a simulation.
struct OracleStart {
  /// lambda for autonomous models, forcing frequency for forced ones.
  double parameter = 0.0;
  std::vector<double> initial_state;
  double settle_time = 100.0;
  std::size_t section_var = 0;
  double section_level = 0.0;
};

/// Where to look for the oscillation threshold of an autonomous model.
struct HopfSearch {
  double lambda_lo = 0.0;
  double lambda_hi = 1.0;
  /// Only eigenvalues with imaginary part in [freq_lo, freq_hi] are tracked.
  double freq_lo = 0.0;
  double freq_hi = HUGE_VAL;
  int steps = 200;
};

struct Model {
  std::string name;
  std::string doc;
  QuadraticSystem system;
  /// Recommended basis (H, K, p).
  HarmonicBasis basis;
  std::optional<PhaseSpec> phase;
  /// The default window applies to omega for forced models, lambda otherwise.
  bool window_on_omega = false;
  double window_lo = 0.0;
  double window_hi = 0.0;
  /// Pre-recast dynamics used by the time-domain checks.
  OriginalOde original;
  OracleStart start;
  std::optional<HopfSearch> hopf;
  /// Auxiliary variables whose recast is only valid while they stay positive.
  std::vector<std::size_t> positive_vars;
  /// Initial guess for a steady state at the given lambda (zeros when empty).
  std::function<std::vector<double>(double lambda)> equilibrium_guess;
};

/// u'' - lambda (1 - u^2) u' + u = 0 with Z = [u, v, w, r], w = 1 - u^2, r = v w.
Model vdp();

/// x' = -y - z, y' = x + a y, z' = b + z (x - lambda).
Model rossler(double a = 0.2, double b = 0.2);

struct ClarinetParams {
  double q_r = 0.01;
  double omega_r = 6597.0;
  double c = 340.0;
  double zeta = 0.2;
  /// Resonator length entering the modal coupling 2c/l.
  double l = 0.22;
  std::vector<double> omegas{2426.5, 7279.5, 12132.5, 16985.4, 21838.4};
  std::vector<double> alphas{0.11, 0.19, 0.25, 0.3, 0.34};
  /// Time is rescaled by tau = time_scale * t; 0 selects omegas[0].
  double time_scale = 0.0;
};

/// Modal reed-instrument model with N = params.omegas.size() acoustic modes:
/// Z = [x, y, p_1..p_N, z_1..z_N, u, v, p] with v = sqrt(lambda - p).
/// Frequencies in the lifted system are in units of the time scale.
Model clarinet(const ClarinetParams& params = {});

/// u'' + 2 mu u' + u + u^3 = f cos(lambda t) with Z = [u, v, w], w = u^2.
Model duffing(double mu = 0.1, double f = 1.25);

/// Normalized bubble equation u u'' + 1.5 u'^2 = a (u^-3 - 1) + b cos(lambda t)
/// with Z = [u, v, x, y, z, r], x = 1/u, y = x^2, z = v^2, r = cos(lambda t).
Model rayleigh_plesset(double a = 1.0, double b = 0.1);

/// Built-in HBM models by name: vdp, rossler, clarinet, duffing, rayleigh_plesset.
Model model_by_name(const std::string& name);
/// Same, with constructor arguments taken from a JSON object, e.g.
/// {"mu": 0.1, "f": 1.25} for duffing or {"l": 0.2} for clarinet. Unknown
/// keys raise ConfigError.
Model model_from_config(const std::string& name, const nlohmann::json& params);
std::vector<std::string> model_names();

/// Two-cell biochemical reaction system with rational nonlinearities, recast
/// as a quadratic algebraic system over u = [u1, u2, v1, v2, v3, v4, lambda].
struct BiochemModel {
  double mu = 0.05;
  LiftedSystem system;

  /// Residuals of the original rational equations at (u1, u2, lambda).
  std::vector<double> original_residual(double u1, double u2, double lambda) const;
  /// Completes (u1, u2, lambda) with the auxiliary variables.
  Eigen::VectorXd lift(double u1, double u2, double lambda) const;
};

BiochemModel biochem(double mu = 0.05);

}  // namespace qhbm
