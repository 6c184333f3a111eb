#include "qhbm/anm.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace qhbm {

Eigen::VectorXd BranchSection::at(double a) const {
  Eigen::VectorXd u = coefficients.back();
  for (auto it = coefficients.rbegin() + 1; it != coefficients.rend(); ++it) u = *it + a * u;
  return start + a * u;
}

Eigen::VectorXd BranchSection::derivative(double a) const {
  const int n = order();
  Eigen::VectorXd d = n * coefficients.back();
  for (int p = n - 1; p >= 1; --p) d = p * coefficients[p - 1] + a * d;
  return d;
}

std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::MaxSections: return "max_sections";
    case StopReason::WindowExit: return "window_exit";
    case StopReason::SingularPoint: return "singular_point";
    case StopReason::StepCollapse: return "step_collapse";
    case StopReason::UserStop: return "user_stop";
  }
  return "unknown";
}

std::vector<double> Branch::amax_history() const {
  std::vector<double> out;
  out.reserve(sections.size());
  for (const auto& s : sections) {
    if (!s.clipped) out.push_back(s.a_max);
  }
  return out;
}

std::vector<Eigen::VectorXd> Branch::points() const {
  std::vector<Eigen::VectorXd> out;
  if (sections.empty()) return out;
  out.push_back(sections.front().start);
  for (const auto& s : sections) out.push_back(s.end);
  return out;
}

std::vector<Eigen::VectorXd> Branch::dense_points(int per_section) const {
  std::vector<Eigen::VectorXd> out;
  if (sections.empty()) return out;
  out.push_back(sections.front().start);
  for (const auto& s : sections) {
    for (int i = 1; i < per_section; ++i) out.push_back(s.at(s.a_max * i / per_section));
    out.push_back(s.end);
  }
  return out;
}

Eigen::VectorXd tangent(const LiftedSystem& ls, const Eigen::VectorXd& u0, const Eigen::VectorXd& reference,
                        const AnmSettings& settings) {
  if (u0.size() != static_cast<Eigen::Index>(ls.n_unknown())) throw DimensionError("tangent: point length mismatch");
  return null_vector<double>(jacobian_of<double>(ls, u0), reference, settings.rank_threshold);
}

BranchSection compute_section(const LiftedSystem& ls, const Eigen::VectorXd& u0, const Eigen::VectorXd& reference,
                              const AnmSettings& settings) {
  if (settings.order < 2) throw std::invalid_argument("ANM order must be >= 2");
  if (!(settings.tolerance > 0.0)) throw std::invalid_argument("ANM tolerance must be positive");
  auto series = expand_series<double>(ls, u0, reference, settings.order, settings);
  const auto amax = compute_amax<double>(ls, series, settings);

  BranchSection sec;
  sec.start = u0;
  sec.coefficients = std::move(series.coefficients);
  sec.rcond = series.rcond;
  sec.factorizations = series.factorizations;
  sec.a_max = amax.a_max;
  sec.residual_at_amax = amax.residual;
  sec.end = sec.at(sec.a_max);
  return sec;
}

Eigen::VectorXd axis_direction(const LiftedSystem& ls, std::size_t index, double sign) {
  Eigen::VectorXd d = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ls.n_unknown()));
  d[static_cast<Eigen::Index>(index)] = sign >= 0.0 ? 1.0 : -1.0;
  return d;
}

namespace {

/// Cuts the section at the first a where the window coordinate leaves [lo, hi].
/// Leaves it untouched when the start already lies outside.
void clip_to_window(BranchSection& sec, const ParameterWindow& w, const LiftedSystem& ls) {
  const auto idx = static_cast<Eigen::Index>(w.index);
  if (!w.contains(sec.start[idx])) return;
  constexpr int kGrid = 64;
  double inside = 0.0;
  double outside = sec.a_max;
  for (int i = 1; i <= kGrid; ++i) {
    const double a = sec.a_max * i / kGrid;
    if (!w.contains(sec.at(a)[idx])) {
      outside = a;
      break;
    }
    inside = a;
  }
  const double bound = sec.at(outside)[idx] > w.hi ? w.hi : w.lo;
  const bool above = sec.start[idx] > bound;
  for (int it = 0; it < 100 && outside - inside > 0.0; ++it) {
    const double mid = 0.5 * (inside + outside);
    if ((sec.at(mid)[idx] > bound) == above) {
      inside = mid;
    } else {
      outside = mid;
    }
  }
  sec.a_max = outside;
  sec.end = sec.at(outside);
  sec.residual_at_amax = residual_of<double>(ls, sec.end).norm();
  sec.clipped = true;
}

}  // namespace

Branch continue_branch(const LiftedSystem& ls, const Eigen::VectorXd& u_start, const Eigen::VectorXd& direction,
                       const AnmSettings& settings, const std::optional<ParameterWindow>& window,
                       const StopPredicate& stop_when) {
  if (u_start.size() != static_cast<Eigen::Index>(ls.n_unknown()) || direction.size() != u_start.size()) {
    throw DimensionError("continue_branch: point length mismatch");
  }
  Branch branch;
  Eigen::VectorXd u0 = u_start;
  Eigen::VectorXd reference = direction.normalized();
  for (int k = 0; k < settings.max_sections; ++k) {
    BranchSection sec;
    try {
      sec = compute_section(ls, u0, reference, settings);
    } catch (const SingularPointError& ex) {
      branch.stop = StopReason::SingularPoint;
      branch.message = ex.what();
      return branch;
    }
    if (!(sec.a_max > settings.min_step)) {
      branch.stop = StopReason::StepCollapse;
      branch.message = "range of utility collapsed (a_max = " + std::to_string(sec.a_max) + ")";
      return branch;
    }
    if (window && !window->contains(sec.end[static_cast<Eigen::Index>(window->index)])) {
      clip_to_window(sec, *window, ls);
      branch.sections.push_back(std::move(sec));
      branch.stop = StopReason::WindowExit;
      return branch;
    }
    reference = sec.derivative(sec.a_max).normalized();
    u0 = sec.end;
    branch.sections.push_back(std::move(sec));
    if (stop_when && stop_when(branch)) {
      branch.stop = StopReason::UserStop;
      return branch;
    }
  }
  branch.stop = StopReason::MaxSections;
  return branch;
}

NewtonResult newton_correct(const LiftedSystem& ls, const Eigen::VectorXd& guess, std::size_t fixed_index,
                            double tolerance, int max_iterations) {
  const auto n = static_cast<Eigen::Index>(ls.n_res);
  if (guess.size() != n + 1) throw DimensionError("newton_correct: point length mismatch");
  if (fixed_index > ls.n_res) throw std::out_of_range("newton_correct: fixed index out of range");
  const auto fixed = static_cast<Eigen::Index>(fixed_index);

  NewtonResult res;
  res.u = guess;
  Eigen::VectorXd r = residual_of<double>(ls, res.u);
  res.residual_norm = r.norm();
  for (int it = 0; it <= max_iterations; ++it) {
    res.iterations = it;
    if (res.residual_norm <= tolerance) return res;
    if (it == max_iterations) break;

    const Eigen::MatrixXd j = jacobian_of<double>(ls, res.u);
    Eigen::MatrixXd sq(n, n);
    sq.leftCols(fixed) = j.leftCols(fixed);
    sq.rightCols(n - fixed) = j.rightCols(n - fixed);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(sq);
    const Eigen::VectorXd dx = lu.solve(-r);
    if (!dx.allFinite()) throw SingularPointError("newton_correct: singular Jacobian");
    Eigen::VectorXd step(n + 1);
    step.head(fixed) = dx.head(fixed);
    step[fixed] = 0.0;
    step.tail(n - fixed) = dx.tail(n - fixed);

    double alpha = 1.0;
    Eigen::VectorXd best = res.u + step;
    Eigen::VectorXd best_r = residual_of<double>(ls, best);
    while (best_r.norm() >= (1.0 - 1e-4 * alpha) * res.residual_norm && alpha > 1.0 / 1024) {
      alpha /= 2;
      Eigen::VectorXd trial = res.u + alpha * step;
      Eigen::VectorXd trial_r = residual_of<double>(ls, trial);
      if (trial_r.norm() < best_r.norm()) {
        best = std::move(trial);
        best_r = std::move(trial_r);
      }
    }
    res.u = std::move(best);
    r = std::move(best_r);
    res.residual_norm = r.norm();
    if (!std::isfinite(res.residual_norm)) break;
  }
  throw ConvergenceError("newton_correct: no convergence in " + std::to_string(max_iterations) +
                         " iterations (residual " + std::to_string(res.residual_norm) + ")");
}

std::vector<CollapseFlag> detect_step_collapse(const std::vector<double>& amax, std::size_t window, double fraction) {
  std::vector<CollapseFlag> flags;
  if (window == 0) return flags;
  double arclength = 0.0;
  for (std::size_t i = 0; i < amax.size(); ++i) {
    if (i >= window) {
      std::vector<double> trailing(amax.begin() + static_cast<std::ptrdiff_t>(i - window),
                                   amax.begin() + static_cast<std::ptrdiff_t>(i));
      std::sort(trailing.begin(), trailing.end());
      const double median = window % 2 == 1 ? trailing[window / 2]
                                            : 0.5 * (trailing[window / 2 - 1] + trailing[window / 2]);
      if (amax[i] < fraction * median) flags.push_back({i, arclength});
    }
    arclength += amax[i];
  }
  return flags;
}

LiftedSystem perturb_and_switch(const LiftedSystem& ls, double magnitude, std::uint64_t seed) {
  if (magnitude < 0.0) throw std::invalid_argument("perturbation magnitude must be non-negative");
  LiftedSystem out = ls;
  if (magnitude == 0.0) return out;
  // mt19937_64 output is fixed by the standard; map it to [-1, 1) by hand so
  // the vector does not depend on the library's distribution implementation.
  std::mt19937_64 rng(seed);
  std::vector<double> v(ls.n_res);
  double norm2 = 0.0;
  for (auto& x : v) {
    x = 2.0 * static_cast<double>(rng() >> 11) * 0x1.0p-53 - 1.0;
    norm2 += x * x;
  }
  const double scale = magnitude / std::sqrt(norm2);
  for (std::size_t i = 0; i < v.size(); ++i) out.constant[i] += scale * v[i];
  return out;
}

std::optional<Eigen::VectorXd> branch_point_at(const Branch& branch, std::size_t index, double value) {
  const auto idx = static_cast<Eigen::Index>(index);
  for (const auto& s : branch.sections) {
    // Scan the section on a fine grid for a sign change, then bisect.
    constexpr int kGrid = 64;
    double a_prev = 0.0;
    double f_prev = s.start[idx] - value;
    if (f_prev == 0.0) return s.start;
    for (int i = 1; i <= kGrid; ++i) {
      const double a = s.a_max * i / kGrid;
      const double f = s.at(a)[idx] - value;
      if (f == 0.0) return s.at(a);
      if ((f < 0.0) != (f_prev < 0.0)) {
        double lo = a_prev;
        double hi = a;
        double flo = f_prev;
        for (int it = 0; it < 100; ++it) {
          const double mid = 0.5 * (lo + hi);
          const double fm = s.at(mid)[idx] - value;
          if ((fm < 0.0) == (flo < 0.0)) {
            lo = mid;
            flo = fm;
          } else {
            hi = mid;
          }
        }
        return s.at(0.5 * (lo + hi));
      }
      a_prev = a;
      f_prev = f;
    }
  }
  return std::nullopt;
}

std::vector<FoldPoint> fold_points(const Branch& branch, std::size_t index, int probes) {
  std::vector<FoldPoint> out;
  const auto idx = static_cast<Eigen::Index>(index);
  double prev = 0.0;
  for (std::size_t s = 0; s < branch.sections.size(); ++s) {
    const auto& sec = branch.sections[s];
    double a_prev = 0.0;
    for (int i = 0; i <= probes; ++i) {
      const double a = sec.a_max * i / probes;
      const double d = sec.derivative(a)[idx];
      if (d != 0.0 && prev != 0.0 && (d < 0.0) != (prev < 0.0)) {
        double lo = i == 0 ? 0.0 : a_prev;
        double hi = a;
        if (i > 0) {
          const bool lo_negative = sec.derivative(lo)[idx] < 0.0;
          for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (lo + hi);
            if ((sec.derivative(mid)[idx] < 0.0) == lo_negative) lo = mid; else hi = mid;
          }
        }
        const double at = 0.5 * (lo + hi);
        out.push_back({s, at, sec.at(at)});
      }
      if (d != 0.0) prev = d;
      a_prev = a;
    }
  }
  return out;
}

}  // namespace qhbm
