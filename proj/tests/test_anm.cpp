#include <doctest.h>

#include <cmath>
#include <numbers>

#include "qhbm/anm.hpp"
#include "qhbm/hbm.hpp"
#include "qhbm/models.hpp"
#include "qhbm/oracle.hpp"
#include "qhbm/start.hpp"
#include "support.hpp"

using namespace qhbm;
using namespace qhbm::testing;

namespace {

struct VdpPoint {
  Model model = vdp();
  HarmonicBasis basis{10, 4, 0, std::nullopt};
  LiftedSystem ls;
  Eigen::VectorXd u;
};

const VdpPoint& vdp_point() {
  static const VdpPoint p = [] {
    VdpPoint v;
    v.ls = assemble(v.model.system, v.basis, v.model.phase);
    v.u = start_from_oracle(v.model, v.ls, v.basis, 1.0).u;
    return v;
  }();
  return p;
}

double circle_angle(const Eigen::VectorXd& u) { return std::atan2(u[1], u[0]); }

}  // namespace

TEST_CASE("circle tangent at (1, 0)") {
  const auto t = tangent(circle_system(), vec({1.0, 0.0}), vec({0.0, 1.0}));
  CHECK(std::abs(t[0]) < 1e-15);
  CHECK(t[1] == doctest::Approx(1.0));
  const auto back = tangent(circle_system(), vec({1.0, 0.0}), vec({0.0, -1.0}));
  CHECK(back[1] == doctest::Approx(-1.0));
}

TEST_CASE("linear system tangent") {
  const auto t = tangent(linear_system(), vec({0.0, 0.0}), vec({1.0, 1.0}));
  CHECK(t[0] == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(t[1] == doctest::Approx(1.0 / std::sqrt(2.0)));
}

TEST_CASE("van der pol tangent lies in the null space") {
  const auto& p = vdp_point();
  const auto t = tangent(p.ls, p.u, axis_direction(p.ls, *p.ls.lambda_index));
  const Eigen::MatrixXd j = jacobian_of<double>(p.ls, p.u);
  CHECK((j * t).norm() <= 1e-10 * j.norm());
  CHECK(t.norm() == doctest::Approx(1.0));
}

TEST_CASE("circle second-order coefficient") {
  AnmSettings s;
  s.order = 2;
  const auto sec = compute_section(circle_system(), vec({1.0, 0.0}), vec({0.0, 1.0}), s);
  CHECK(sec.coefficients[1][0] == doctest::Approx(-0.5));
  CHECK(std::abs(sec.coefficients[1][1]) < 1e-15);
}

TEST_CASE("linear systems have no higher-order terms and a capped range") {
  AnmSettings s;
  const auto sec = compute_section(linear_system(), vec({0.0, 0.0}), vec({1.0, 1.0}), s);
  for (std::size_t p = 1; p < sec.coefficients.size(); ++p) CHECK(sec.coefficients[p].norm() == 0.0);
  CHECK(sec.a_max == s.amax_cap);
}

TEST_CASE("circle range of utility matches the closed form") {
  for (double eps : {1e-8, 1e-6, 1e-10}) {
    AnmSettings s;
    s.order = 2;
    s.tolerance = eps;
    const auto sec = compute_section(circle_system(), vec({1.0, 0.0}), vec({0.0, 1.0}), s);
    const double exact = std::pow(4.0 * eps, 0.25);
    CHECK(sec.a_max <= exact * (1.0 + 1e-12));
    CHECK(sec.a_max >= exact / 2.0);
    // Closed-form truncated residual a^4 / 4.
    const double a = 0.5 * sec.a_max;
    CHECK(residual_of<double>(circle_system(), sec.at(a)).norm() == doctest::Approx(std::pow(a, 4) / 4).epsilon(1e-6));
  }
}

TEST_CASE("van der pol series is accurate inside its range") {
  const auto& p = vdp_point();
  AnmSettings s;
  const auto sec = compute_section(p.ls, p.u, axis_direction(p.ls, *p.ls.lambda_index), s);
  CHECK(sec.a_max > 0.0);
  CHECK(residual_of<double>(p.ls, sec.at(0.5 * sec.a_max)).norm() <= s.tolerance);
  CHECK(residual_of<double>(p.ls, sec.end).norm() <= s.tolerance);
  CHECK(sec.factorizations == 1);
}

TEST_CASE("series coefficients are orthogonal to the unit tangent") {
  const auto& p = vdp_point();
  AnmSettings s;
  const auto sec = compute_section(p.ls, p.u, axis_direction(p.ls, *p.ls.lambda_index), s);
  const auto& u1 = sec.tangent();
  CHECK(u1.norm() == doctest::Approx(1.0).epsilon(1e-14));
  for (std::size_t k = 1; k < sec.coefficients.size(); ++k) {
    CHECK(std::abs(u1.dot(sec.coefficients[k])) <= 1e-12 * (1.0 + sec.coefficients[k].norm()));
  }
}

TEST_CASE("series engine gives the same coefficients in long double") {
  const auto& p = vdp_point();
  AnmSettings s;
  s.order = 8;
  const Eigen::VectorXd ref = axis_direction(p.ls, *p.ls.lambda_index);
  const auto d = expand_series<double>(p.ls, p.u, ref, s.order, s);
  const auto l = expand_series<long double>(p.ls, p.u.cast<long double>(), ref.cast<long double>(), s.order, s);
  for (int k = 0; k < s.order; ++k) {
    CHECK((d.coefficients[k] - l.coefficients[k].cast<double>()).norm() <= 1e-9 * (1.0 + d.coefficients[k].norm()));
  }
}

TEST_CASE("circle continuation traces a full revolution") {
  AnmSettings s;
  s.max_sections = 500;
  double turned = 0.0;
  const auto branch = continue_branch(circle_system(), vec({1.0, 0.0}), vec({0.0, 1.0}), s, std::nullopt,
                                      [&](const Branch& b) {
                                        const auto& sec = b.sections.back();
                                        double d = circle_angle(sec.end) - circle_angle(sec.start);
                                        if (d < -std::numbers::pi) d += 2 * std::numbers::pi;
                                        turned += d;
                                        return turned >= 2 * std::numbers::pi;
                                      });
  CHECK(branch.stop == StopReason::UserStop);
  CHECK(turned >= 2 * std::numbers::pi);
  for (const auto& sec : branch.sections) {
    for (int i = 0; i <= 8; ++i) {
      const auto u = sec.at(sec.a_max * i / 8);
      CHECK(std::abs(u.squaredNorm() - 1.0) <= s.tolerance);
    }
  }
}

TEST_CASE("consecutive sections join and keep their orientation") {
  const auto& p = vdp_point();
  AnmSettings s;
  s.max_sections = 6;
  const auto branch = continue_branch(p.ls, p.u, axis_direction(p.ls, *p.ls.lambda_index), s);
  REQUIRE(branch.sections.size() == 6);
  for (std::size_t k = 1; k < branch.sections.size(); ++k) {
    const auto& prev = branch.sections[k - 1];
    const auto& cur = branch.sections[k];
    CHECK((cur.start - prev.end).norm() == 0.0);
    CHECK(cur.tangent().dot(prev.derivative(prev.a_max)) > 0.0);
    CHECK(cur.factorizations == 1);
    CHECK(cur.residual_at_amax <= s.tolerance);
  }
}

TEST_CASE("window exit stops the run") {
  const auto& p = vdp_point();
  AnmSettings s;
  const auto branch = continue_branch(p.ls, p.u, axis_direction(p.ls, *p.ls.lambda_index), s,
                                      ParameterWindow{*p.ls.lambda_index, 0.0, 1.5});
  CHECK(branch.stop == StopReason::WindowExit);
  const auto& last = branch.sections.back();
  CHECK(last.clipped);
  CHECK(last.end[static_cast<Eigen::Index>(*p.ls.lambda_index)] == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(last.residual_at_amax <= s.tolerance);
  CHECK(branch.amax_history().size() == branch.sections.size() - 1);
}

TEST_CASE("a linear branch is clipped exactly at the window edge") {
  const auto ls = linear_system();
  AnmSettings s;
  const auto branch = continue_branch(ls, vec({0.0, 0.0}), vec({1.0, 1.0}), s, ParameterWindow{1, -1.0, 2.5});
  REQUIRE(branch.sections.size() == 1);
  CHECK(branch.sections[0].clipped);
  CHECK(branch.sections[0].end[1] == doctest::Approx(2.5).epsilon(1e-14));
  CHECK(branch.sections[0].end[0] == doctest::Approx(2.5).epsilon(1e-14));
  CHECK(branch.amax_history().empty());
}

TEST_CASE("van der pol near lambda = 3 keeps a positive range") {
  const auto& p = vdp_point();
  AnmSettings s;
  const auto branch = continue_branch(p.ls, p.u, axis_direction(p.ls, *p.ls.lambda_index), s,
                                      ParameterWindow{*p.ls.lambda_index, 0.0, 3.0});
  const auto& last = branch.sections.back();
  CHECK(last.a_max > 0.0);
  CHECK(residual_of<double>(p.ls, last.end).norm() <= s.tolerance);
}

TEST_CASE("singular start is reported") {
  const auto ls = pitchfork_system();
  CHECK_THROWS_AS(tangent(ls, vec({0.0, 0.0, 0.0}), vec({0.0, 0.0, 1.0})), SingularPointError);
  AnmSettings s;
  const auto branch = continue_branch(ls, vec({0.0, 0.0, 0.0}), vec({0.0, 0.0, 1.0}), s);
  CHECK(branch.stop == StopReason::SingularPoint);
  CHECK(branch.sections.empty());
}

TEST_CASE("bad settings are rejected") {
  AnmSettings s;
  s.order = 1;
  CHECK_THROWS_AS(compute_section(circle_system(), vec({1.0, 0.0}), vec({0.0, 1.0}), s), std::invalid_argument);
  CHECK_THROWS_AS(continue_branch(circle_system(), vec({1.0, 0.0, 0.0}), vec({0.0, 1.0, 0.0}), AnmSettings{}),
                  DimensionError);
}

TEST_CASE("newton leaves an exact solution alone") {
  const auto res = newton_correct(circle_system(), vec({0.6, 0.8}), 1);
  CHECK(res.iterations == 0);
  CHECK(res.u[0] == 0.6);
}

TEST_CASE("newton on the circle with y pinned") {
  const auto res = newton_correct(circle_system(), vec({1.1, 0.0}), 1, 1e-14);
  CHECK(res.iterations <= 5);
  CHECK(res.u[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(res.u[1] == 0.0);
}

TEST_CASE("newton reports failure") {
  CHECK_THROWS_AS(newton_correct(circle_system(), vec({10.0, 0.0}), 1, 1e-14, 2), ConvergenceError);
  CHECK_THROWS_AS(newton_correct(circle_system(), vec({0.0, 2.0}), 1), SingularPointError);
  CHECK_THROWS_AS(newton_correct(circle_system(), vec({1.0}), 0), DimensionError);
}

TEST_CASE("step collapse detection") {
  CHECK(detect_step_collapse(std::vector<double>(10, 0.3), 3).empty());
  const auto flags = detect_step_collapse({1.0, 0.5, 0.25, 0.1, 0.01}, 3);
  REQUIRE(flags.size() == 1);
  CHECK(flags[0].section == 4);
  CHECK(flags[0].arclength == doctest::Approx(1.85));
  CHECK(detect_step_collapse({1.0, 0.01}, 0).empty());
}

TEST_CASE("zero perturbation leaves the system unchanged") {
  const auto& p = vdp_point();
  const auto q = perturb_and_switch(p.ls, 0.0, 9);
  CHECK(q.constant == p.ls.constant);
  CHECK_THROWS_AS(perturb_and_switch(p.ls, -1.0, 9), std::invalid_argument);
}

TEST_CASE("perturbation has the requested size and depends only on the seed") {
  const auto& p = vdp_point();
  const auto a = perturb_and_switch(p.ls, 1e-4, 5);
  const auto b = perturb_and_switch(p.ls, 1e-4, 5);
  const auto c = perturb_and_switch(p.ls, 1e-4, 6);
  double n2 = 0.0;
  for (std::size_t i = 0; i < a.constant.size(); ++i) n2 += std::pow(a.constant[i] - p.ls.constant[i], 2);
  CHECK(std::sqrt(n2) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(a.constant == b.constant);
  CHECK(a.constant != c.constant);
}

TEST_CASE("perturbed continuation switches onto the pitchfork branch") {
  const auto ls = pitchfork_system();
  AnmSettings s;
  s.max_sections = 100;
  const auto perturbed = perturb_and_switch(ls, 1e-4, 3);
  const auto start = newton_correct(perturbed, vec({0.0, 0.0, -1.0}), 2, 1e-14);
  const auto branch = continue_branch(perturbed, start.u, vec({0.0, 0.0, 1.0}), s, ParameterWindow{2, -2.0, 2.0});
  const auto near = branch_point_at(branch, 2, 1.0);
  REQUIRE(near.has_value());
  CHECK(std::abs((*near)[0]) > 0.5);
  const auto fixed = newton_correct(ls, *near, 2, 1e-14);
  CHECK(std::abs(std::abs(fixed.u[0]) - 1.0) <= 1e-6);
  CHECK(fixed.u[2] == (*near)[2]);
  CHECK(fixed.u[2] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("branch lookup and fold detection on the circle") {
  AnmSettings s;
  s.max_sections = 200;
  const auto branch = continue_branch(circle_system(), vec({1.0, 0.0}), vec({0.0, 1.0}), s, std::nullopt,
                                      [](const Branch& b) { return b.sections.back().end[1] < -0.5; });
  const auto top = branch_point_at(branch, 0, 0.0);
  REQUIRE(top.has_value());
  CHECK((*top)[1] == doctest::Approx(1.0).epsilon(1e-7));
  const auto folds = fold_points(branch, 0);
  REQUIRE(folds.size() == 1);
  CHECK(folds[0].u[0] == doctest::Approx(-1.0).epsilon(1e-7));
  CHECK(std::abs(folds[0].u[1]) < 1e-3);
  CHECK_FALSE(branch_point_at(branch, 0, 5.0).has_value());
}
