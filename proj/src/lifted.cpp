#include "qhbm/lifted.hpp"

#include <algorithm>

#include "qhbm/error.hpp"

namespace qhbm {

double LiftedSystem::lambda_of(std::span<const double> u) const {
  if (forced() && omega_index) return forcing_multiple * u[*omega_index];
  if (!lambda_index) throw Error("system has no continuation parameter");
  return u[*lambda_index];
}

double LiftedSystem::omega_of(std::span<const double> u) const {
  if (!omega_index) throw Error("system has no frequency unknown");
  return u[*omega_index];
}

void LiftedSystem::compress() {
  std::sort(quadratic.begin(), quadratic.end(), [](const QuadTerm& a, const QuadTerm& b) {
    if (a.row != b.row) return a.row < b.row;
    if (a.first != b.first) return a.first < b.first;
    return a.second < b.second;
  });
  std::vector<QuadTerm> merged;
  merged.reserve(quadratic.size());
  for (const auto& t : quadratic) {
    if (!merged.empty() && merged.back().row == t.row && merged.back().first == t.first &&
        merged.back().second == t.second) {
      merged.back().coefficient += t.coefficient;
    } else {
      merged.push_back(t);
    }
  }
  std::erase_if(merged, [](const QuadTerm& t) { return t.coefficient == 0.0; });
  quadratic = std::move(merged);
  linear.compress();
}

LiftedSystem make_algebraic_system(std::size_t n_res) {
  LiftedSystem ls;
  ls.n_res = n_res;
  ls.constant.assign(n_res, 0.0);
  ls.linear = SparseMatrix(n_res, n_res + 1);
  return ls;
}

std::vector<double> residual(const LiftedSystem& ls, std::span<const double> u) {
  if (u.size() != ls.n_unknown()) throw DimensionError("residual: expected " + std::to_string(ls.n_unknown()) + " unknowns");
  const Eigen::Map<const Eigen::VectorXd> uv(u.data(), static_cast<Eigen::Index>(u.size()));
  const Eigen::VectorXd r = residual_of<double>(ls, uv);
  return {r.data(), r.data() + r.size()};
}

Eigen::MatrixXd jacobian(const LiftedSystem& ls, std::span<const double> u) {
  if (u.size() != ls.n_unknown()) throw DimensionError("jacobian: expected " + std::to_string(ls.n_unknown()) + " unknowns");
  const Eigen::Map<const Eigen::VectorXd> uv(u.data(), static_cast<Eigen::Index>(u.size()));
  return jacobian_of<double>(ls, uv);
}

}  // namespace qhbm
