#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qhbm/error.hpp"
#include "qhbm/lifted.hpp"

namespace qhbm {

struct AnmSettings {
  int order = 20;
  double tolerance = 1e-8;
  int max_sections = 200;
  /// Divisor applied while verifying the range of utility.
  double shrink = 2.0;
  int max_shrinks = 30;
  /// Step used when the leading neglected terms all vanish.
  double amax_cap = 1e3;
  /// Sections shorter than this end the run.
  double min_step = 1e-12;
  /// Bordered matrices with an estimated reciprocal condition below this are
  /// re-examined with a rank-revealing factorization.
  double singular_rcond = 1e-14;
  /// Relative threshold of the rank test on J.
  double rank_threshold = 1e-12;
  double perturbation = 1e-4;
  std::uint64_t seed = 1;
};

/// Stops the run once unknown `index` leaves [lo, hi].
struct ParameterWindow {
  std::size_t index = 0;
  double lo = -HUGE_VAL;
  double hi = HUGE_VAL;
  bool contains(double v) const { return v >= lo && v <= hi; }
};

struct BranchSection {
  Eigen::VectorXd start;
  /// coefficients[p - 1] holds u_p, p = 1..n.
  std::vector<Eigen::VectorXd> coefficients;
  double a_max = 0.0;
  double residual_at_amax = 0.0;
  /// Reciprocal condition estimate of the bordered matrix.
  double rcond = 0.0;
  int factorizations = 0;
  Eigen::VectorXd end;
  /// Set when the section was cut short where it left the parameter window.
  bool clipped = false;

  int order() const { return static_cast<int>(coefficients.size()); }
  const Eigen::VectorXd& tangent() const { return coefficients.front(); }
  Eigen::VectorXd at(double a) const;
  Eigen::VectorXd derivative(double a) const;
};

enum class StopReason { MaxSections, WindowExit, SingularPoint, StepCollapse, UserStop };
std::string to_string(StopReason r);

struct Branch {
  std::vector<BranchSection> sections;
  StopReason stop = StopReason::MaxSections;
  std::string message;

  /// Ranges of utility of the sections, leaving out a section clipped at the window.
  std::vector<double> amax_history() const;
  /// Section ends, preceded by the start of the first section.
  std::vector<Eigen::VectorXd> points() const;
  /// Samples every section at `per_section` evenly spaced a values (plus the end).
  std::vector<Eigen::VectorXd> dense_points(int per_section) const;
};

// ---------------------------------------------------------------------------
// Series engine, generic over the scalar so that checks can run in extended
// precision with the same code path.

template <class Scalar>
struct SeriesExpansion {
  VectorX<Scalar> start;
  std::vector<VectorX<Scalar>> coefficients;
  double rcond = 0.0;
  int factorizations = 0;

  VectorX<Scalar> at(const Scalar& a) const {
    VectorX<Scalar> u = coefficients.back();
    for (auto it = coefficients.rbegin() + 1; it != coefficients.rend(); ++it) u = (*it + a * u).eval();
    return (start + a * u).eval();
  }
};

/// Unit null vector of J (N x (N+1)) from a rank-revealing QR of J^T, signed
/// so that its dot product with `reference` is non-negative.
template <class Scalar>
VectorX<Scalar> null_vector(const MatrixX<Scalar>& j, const VectorX<Scalar>& reference, double rank_threshold) {
  Eigen::ColPivHouseholderQR<MatrixX<Scalar>> qr(j.transpose());
  qr.setThreshold(Scalar(rank_threshold));
  if (qr.rank() < j.rows()) {
    throw SingularPointError("Jacobian rank " + std::to_string(qr.rank()) + " < " + std::to_string(j.rows()) +
                             " (likely bifurcation point)");
  }
  MatrixX<Scalar> q = qr.householderQ();
  VectorX<Scalar> t = q.col(j.cols() - 1);
  if (t.dot(reference) < Scalar(0)) t = -t;
  return t;
}

/// Tangent u1 and series u2..un at a solution point u0.
///
/// The bordered matrix [J; ref^T] is factorized once; the tangent is its
/// solution against e_{N+1}, and each order solves
/// [J; ref^T] y = [-sum Q(u_i, u_{p-i}); 0] followed by projection onto the
/// complement of u1, which enforces u1^T u_p = 0.
template <class Scalar>
SeriesExpansion<Scalar> expand_series(const LiftedSystem& ls, const VectorX<Scalar>& u0,
                                      const VectorX<Scalar>& reference, int order, const AnmSettings& settings) {
  using std::sqrt;
  if (order < 1) throw std::invalid_argument("series order must be >= 1");
  const auto n = static_cast<Eigen::Index>(ls.n_res);
  if (u0.size() != n + 1 || reference.size() != n + 1) throw DimensionError("expand_series: point length mismatch");

  SeriesExpansion<Scalar> out;
  out.start = u0;
  const MatrixX<Scalar> j = jacobian_of<Scalar>(ls, u0);
  MatrixX<Scalar> bordered(n + 1, n + 1);
  bordered.topRows(n) = j;
  bordered.row(n) = reference.transpose() / reference.norm();

  Eigen::PartialPivLU<MatrixX<Scalar>> lu(bordered);
  ++out.factorizations;
  out.rcond = static_cast<double>(lu.rcond());

  VectorX<Scalar> u1;
  const bool finite_rcond = std::isfinite(out.rcond);
  if (!finite_rcond || out.rcond < settings.singular_rcond) {
    u1 = null_vector<Scalar>(j, reference, settings.rank_threshold);
    bordered.row(n) = u1.transpose();
    lu.compute(bordered);
    ++out.factorizations;
    out.rcond = static_cast<double>(lu.rcond());
  } else {
    VectorX<Scalar> e = VectorX<Scalar>::Zero(n + 1);
    e[n] = Scalar(1);
    u1 = lu.solve(e);
    u1 /= u1.norm();
  }
  out.coefficients.push_back(u1);

  VectorX<Scalar> rhs(n + 1);
  for (int p = 2; p <= order; ++p) {
    rhs.setZero();
    for (int i = 1; i < p; ++i) {
      bilinear_add(ls, out.coefficients[i - 1].data(), out.coefficients[p - i - 1].data(), rhs.data());
    }
    rhs = -rhs;
    rhs[n] = Scalar(0);
    VectorX<Scalar> y = lu.solve(rhs);
    y -= u1.dot(y) * u1;
    out.coefficients.push_back(std::move(y));
  }
  return out;
}

struct AmaxResult {
  double a_max = 0.0;
  double residual = 0.0;
  int shrinks = 0;
  /// Order k of the leading neglected residual term used for the estimate.
  int leading_order = 0;
};

/// Range of utility: estimate from the leading neglected residual term
/// R_k = sum_{i+j=k} Q(u_i, u_j), then shrink until ||r(u(a))|| <= tol holds at
/// a and at interior probe points.
template <class Scalar>
AmaxResult compute_amax(const LiftedSystem& ls, const SeriesExpansion<Scalar>& s, const AnmSettings& settings) {
  using std::pow;
  const int n = static_cast<int>(s.coefficients.size());
  const auto rows = static_cast<Eigen::Index>(ls.n_res);
  AmaxResult res;
  double estimate = settings.amax_cap;
  for (int k = n + 1; k <= 2 * n; ++k) {
    VectorX<Scalar> rk = VectorX<Scalar>::Zero(rows);
    for (int i = k - n; i <= n; ++i) {
      bilinear_add(ls, s.coefficients[i - 1].data(), s.coefficients[k - i - 1].data(), rk.data());
    }
    const double norm = static_cast<double>(rk.norm());
    if (norm > 0.0 && std::isfinite(norm)) {
      estimate = std::min(settings.amax_cap, std::pow(settings.tolerance / norm, 1.0 / k));
      res.leading_order = k;
      break;
    }
  }

  auto residual_norm = [&](double a) {
    return static_cast<double>(residual_of<Scalar>(ls, s.at(Scalar(a))).norm());
  };
  double a = estimate;
  for (int attempt = 0; attempt <= settings.max_shrinks; ++attempt) {
    bool ok = true;
    double at_end = 0.0;
    for (double frac : {0.25, 0.5, 0.75, 1.0}) {
      const double r = residual_norm(frac * a);
      if (!(r <= settings.tolerance)) {
        ok = false;
        break;
      }
      at_end = r;
    }
    if (ok) {
      res.a_max = a;
      res.residual = at_end;
      res.shrinks = attempt;
      return res;
    }
    a /= settings.shrink;
  }
  res.a_max = 0.0;
  res.residual = residual_norm(0.0);
  res.shrinks = settings.max_shrinks;
  return res;
}

// ---------------------------------------------------------------------------
// Double-precision continuation API.

/// Unit null vector of the Jacobian at u0 with non-negative dot product with `reference`.
Eigen::VectorXd tangent(const LiftedSystem& ls, const Eigen::VectorXd& u0, const Eigen::VectorXd& reference,
                        const AnmSettings& settings = {});

/// One ANM section at u0 (tangent, series, range of utility).
BranchSection compute_section(const LiftedSystem& ls, const Eigen::VectorXd& u0, const Eigen::VectorXd& reference,
                              const AnmSettings& settings);

/// Unit vector along unknown `index` with the given sign.
Eigen::VectorXd axis_direction(const LiftedSystem& ls, std::size_t index, double sign = 1.0);

using StopPredicate = std::function<bool(const Branch&)>;

/// Chains sections from u_start until max_sections, a window exit, a
/// singular point, a collapsed step or `stop_when` returns true.
Branch continue_branch(const LiftedSystem& ls, const Eigen::VectorXd& u_start, const Eigen::VectorXd& direction,
                       const AnmSettings& settings, const std::optional<ParameterWindow>& window = std::nullopt,
                       const StopPredicate& stop_when = nullptr);

struct NewtonResult {
  Eigen::VectorXd u;
  int iterations = 0;
  double residual_norm = 0.0;
};

/// Damped Newton on the square system obtained by pinning unknown `fixed_index`.
NewtonResult newton_correct(const LiftedSystem& ls, const Eigen::VectorXd& guess, std::size_t fixed_index,
                            double tolerance = 1e-9, int max_iterations = 50);

struct CollapseFlag {
  std::size_t section = 0;
  /// Accumulated pseudo-arclength at the start of the flagged section.
  double arclength = 0.0;
};

/// Sections whose a_max falls below `fraction` times the median of the
/// `window` preceding values.
std::vector<CollapseFlag> detect_step_collapse(const std::vector<double>& amax, std::size_t window,
                                               double fraction = 0.2);

/// Copy of `ls` with a seeded random vector of norm `magnitude` added to the constant term.
LiftedSystem perturb_and_switch(const LiftedSystem& ls, double magnitude, std::uint64_t seed);

/// Locates the first point of the branch where unknown `index` equals value,
/// refined inside the section by bisection on the series.
std::optional<Eigen::VectorXd> branch_point_at(const Branch& branch, std::size_t index, double value);

struct FoldPoint {
  std::size_t section = 0;
  double a = 0.0;
  Eigen::VectorXd u;
};

/// Limit points with respect to unknown `index`: sign changes of du[index]/da,
/// probed at `probes` points per section and refined by bisection.
std::vector<FoldPoint> fold_points(const Branch& branch, std::size_t index, int probes = 16);

}  // namespace qhbm
