#include "qhbm/models.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace qhbm {

namespace {

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = i;
  return out;
}

}  // namespace

Model vdp() {
  // Z = [u, v, w, r]
  auto sys = new_system(4)
                 .set_mass_entry(0, 0, 1.0)
                 .set_mass_entry(1, 1, 1.0)
                 .add_linear(LinearPart::L0, 0, 1, 1.0)
                 .add_linear(LinearPart::L0, 1, 0, -1.0)
                 .add_linear(LinearPart::L1, 1, 3, 1.0)
                 .add_constant(ConstantPart::C0, 2, 1.0)
                 .add_linear(LinearPart::L0, 2, 2, -1.0)
                 .add_quadratic(2, 0, 0, -1.0)
                 .add_linear(LinearPart::L0, 3, 3, 1.0)
                 .add_quadratic(3, 1, 2, -1.0)
                 .set_var_names({"u", "v", "w", "r"})
                 .set_original_indices({0, 1})
                 .build();

  Model m;
  m.name = "vdp";
  m.doc = "Van der Pol oscillator u'' - lambda (1 - u^2) u' + u = 0; w = 1 - u^2, r = v w.";
  m.system = std::move(sys);
  m.basis = {10, 4, 0, std::nullopt};
  m.phase = PhaseSpec{0, 0};
  m.window_lo = 0.05;
  m.window_hi = 3.0;
  m.original.dim = 2;
  m.original.state_indices = {0, 1};
  m.original.rhs = [](double, std::span<const double> y, double lambda, std::span<double> dy) {
    dy[0] = y[1];
    dy[1] = lambda * (1.0 - y[0] * y[0]) * y[1] - y[0];
  };
  m.original.lift = [](double, std::span<const double> y, double) {
    const double w = 1.0 - y[0] * y[0];
    return std::vector<double>{y[0], y[1], w, y[1] * w};
  };
  m.start = {1.0, {2.0, 0.0}, 100.0, 1, 0.0};
  m.equilibrium_guess = [](double) { return std::vector<double>{0.0, 0.0, 1.0, 0.0}; };
  return m;
}

Model rossler(double a, double b) {
  auto sys = new_system(3)
                 .set_mass_entry(0, 0, 1.0)
                 .set_mass_entry(1, 1, 1.0)
                 .set_mass_entry(2, 2, 1.0)
                 .add_linear(LinearPart::L0, 0, 1, -1.0)
                 .add_linear(LinearPart::L0, 0, 2, -1.0)
                 .add_linear(LinearPart::L0, 1, 0, 1.0)
                 .add_linear(LinearPart::L0, 1, 1, a)
                 .add_constant(ConstantPart::C0, 2, b)
                 .add_linear(LinearPart::L1, 2, 2, -1.0)
                 .add_quadratic(2, 2, 0, 1.0)
                 .set_var_names({"x", "y", "z"})
                 .set_original_indices({0, 1, 2})
                 .build();

  Model m;
  m.name = "rossler";
  m.doc = "Rossler system x' = -y - z, y' = x + a y, z' = b + z (x - lambda); no auxiliary variables.";
  m.system = std::move(sys);
  m.basis = {10, 3, 0, std::nullopt};
  m.phase = PhaseSpec{0, 0};
  m.window_lo = 2.0;
  m.window_hi = 4.5;
  m.original.dim = 3;
  m.original.state_indices = {0, 1, 2};
  m.original.rhs = [a, b](double, std::span<const double> y, double lambda, std::span<double> dy) {
    dy[0] = -y[1] - y[2];
    dy[1] = y[0] + a * y[1];
    dy[2] = b + y[2] * (y[0] - lambda);
  };
  m.original.lift = [](double, std::span<const double> y, double) { return std::vector<double>(y.begin(), y.end()); };
  m.start = {2.5, {1.0, 1.0, 0.0}, 500.0, 0, 0.0};
  m.equilibrium_guess = [a, b](double lambda) {
    // z (a z - lambda) = -b on the branch that tends to zero with b.
    const double z = (lambda - std::sqrt(lambda * lambda - 4.0 * a * b)) / (2.0 * a);
    return std::vector<double>{a * z, -z, z};
  };
  return m;
}

Model clarinet(const ClarinetParams& prm) {
  const std::size_t n = prm.omegas.size();
  if (n == 0 || prm.alphas.size() != n) throw ConfigError("clarinet: omegas and alphas must have the same nonzero length");
  if (!(prm.l > 0.0)) throw ConfigError("clarinet: resonator length must be positive");
  const double s = prm.time_scale > 0.0 ? prm.time_scale : prm.omegas.front();
  const double wr = prm.omega_r / s;
  const double coupling = 2.0 * prm.c / (prm.l * s);

  const std::size_t ix = 0;
  const std::size_t iy = 1;
  auto ip = [](std::size_t k) { return 2 + k; };
  auto iz = [n](std::size_t k) { return 2 + n + k; };
  const std::size_t iu = 2 + 2 * n;
  const std::size_t iv = iu + 1;
  const std::size_t ipp = iu + 2;
  const std::size_t ne = 2 * n + 5;

  SystemBuilder b(ne);
  b.set_mass_entry(0, ix, 1.0).add_linear(LinearPart::L0, 0, iy, 1.0);
  b.set_mass_entry(1, iy, 1.0)
      .add_linear(LinearPart::L0, 1, ipp, wr * wr)
      .add_linear(LinearPart::L0, 1, iy, -prm.q_r * wr)
      .add_linear(LinearPart::L0, 1, ix, -wr * wr);
  for (std::size_t k = 0; k < n; ++k) {
    const double wn = prm.omegas[k] / s;
    b.set_mass_entry(ip(k), ip(k), 1.0).add_linear(LinearPart::L0, ip(k), iz(k), 1.0);
    b.set_mass_entry(iz(k), iz(k), 1.0)
        .set_mass_entry(iz(k), iu, -coupling)
        .add_linear(LinearPart::L0, iz(k), iz(k), -2.0 * prm.alphas[k] * prm.c / s)
        .add_linear(LinearPart::L0, iz(k), ip(k), -wn * wn);
  }
  // 0 = -u + zeta (1 - lambda) v + zeta x v
  b.add_linear(LinearPart::L0, iu, iu, -1.0)
      .add_linear(LinearPart::L0, iu, iv, prm.zeta)
      .add_linear(LinearPart::L1, iu, iv, -prm.zeta)
      .add_quadratic(iu, ix, iv, prm.zeta);
  // 0 = -p + sum p_n
  b.add_linear(LinearPart::L0, iv, ipp, -1.0);
  for (std::size_t k = 0; k < n; ++k) b.add_linear(LinearPart::L0, iv, ip(k), 1.0);
  // 0 = lambda - p - v^2
  b.add_constant(ConstantPart::C1, ipp, 1.0).add_linear(LinearPart::L0, ipp, ipp, -1.0).add_quadratic(ipp, iv, iv, -1.0);

  std::vector<std::string> names{"x", "y"};
  for (std::size_t k = 1; k <= n; ++k) names.push_back("p" + std::to_string(k));
  for (std::size_t k = 1; k <= n; ++k) names.push_back("z" + std::to_string(k));
  names.insert(names.end(), {"u", "v", "p"});
  b.set_var_names(names);
  b.set_original_indices(iota(2 * n + 2));

  Model m;
  m.name = "clarinet";
  m.doc = "Modal reed instrument: x'' + q_r w_r x' + w_r^2 x = w_r^2 p, p_n'' + 2 a_n c p_n' + w_n^2 p_n = (2c/l) u', "
          "u = zeta (1 - lambda + x) sqrt(lambda - p), p = sum p_n; time in units of 1/" +
          std::to_string(s) + " s.";
  m.system = b.build();
  m.basis = {3, ne, 0, std::nullopt};
  m.phase = PhaseSpec{0, 0};
  m.window_lo = 0.0;
  m.window_hi = 1.0;
  m.original.dim = 2 * n + 2;
  m.original.state_indices = iota(2 * n + 2);
  const double zeta = prm.zeta;
  const double qr = prm.q_r;
  std::vector<double> wn2(n), damp(n);
  for (std::size_t k = 0; k < n; ++k) {
    wn2[k] = (prm.omegas[k] / s) * (prm.omegas[k] / s);
    damp[k] = 2.0 * prm.alphas[k] * prm.c / s;
  }
  m.original.rhs = [=](double, std::span<const double> y, double lambda, std::span<double> dy) {
    double p = 0.0;
    double dp = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      p += y[2 + k];
      dp += y[2 + n + k];
    }
    const double v = std::sqrt(lambda - p);
    const double du = zeta * y[1] * v - zeta * (1.0 - lambda + y[0]) * dp / (2.0 * v);
    dy[0] = y[1];
    dy[1] = wr * wr * (p - y[0]) - qr * wr * y[1];
    for (std::size_t k = 0; k < n; ++k) {
      dy[2 + k] = y[2 + n + k];
      dy[2 + n + k] = -damp[k] * y[2 + n + k] - wn2[k] * y[2 + k] + coupling * du;
    }
  };
  m.original.lift = [=](double, std::span<const double> y, double lambda) {
    std::vector<double> z(y.begin(), y.end());
    double p = 0.0;
    for (std::size_t k = 0; k < n; ++k) p += y[2 + k];
    const double v = std::sqrt(lambda - p);
    z.push_back(zeta * (1.0 - lambda + y[0]) * v);
    z.push_back(v);
    z.push_back(p);
    return z;
  };
  m.start = {0.5, std::vector<double>(2 * n + 2, 0.0), 2000.0, 0, 0.0};
  // The first acoustic mode sits at frequency omegas[0] / s.
  const double w1 = prm.omegas.front() / s;
  m.hopf = HopfSearch{0.05, 0.95, 0.5 * w1, 1.5 * w1, 180};
  m.start.initial_state[0] = 1e-3;
  m.equilibrium_guess = [=](double lambda) {
    std::vector<double> z(ne, 0.0);
    const double v = std::sqrt(std::max(lambda, 0.0));
    z[iu] = zeta * (1.0 - lambda) * v;
    z[iv] = v;
    return z;
  };
  m.positive_vars = {iv};
  return m;
}

Model duffing(double mu, double f) {
  // Z = [u, v, w]
  auto sys = new_system(3)
                 .set_mass_entry(0, 0, 1.0)
                 .set_mass_entry(1, 1, 1.0)
                 .add_linear(LinearPart::L0, 0, 1, 1.0)
                 .add_constant(ConstantPart::C0, 1, f, 1, Phase::Cos)
                 .add_linear(LinearPart::L0, 1, 1, -2.0 * mu)
                 .add_linear(LinearPart::L0, 1, 0, -1.0)
                 .add_quadratic(1, 0, 2, -1.0)
                 .add_linear(LinearPart::L0, 2, 2, 1.0)
                 .add_quadratic(2, 0, 0, -1.0)
                 .set_var_names({"u", "v", "w"})
                 .set_original_indices({0, 1})
                 .build();

  Model m;
  m.name = "duffing";
  m.doc = "Forced Duffing oscillator u'' + 2 mu u' + u + u^3 = f cos(lambda t); w = u^2, lambda = p omega.";
  m.system = std::move(sys);
  m.basis = {5, 3, 0, 1};
  m.window_on_omega = true;
  m.window_lo = 0.2;
  m.window_hi = 2.0;
  m.original.dim = 2;
  m.original.state_indices = {0, 1};
  m.original.rhs = [mu, f](double t, std::span<const double> y, double lambda, std::span<double> dy) {
    dy[0] = y[1];
    dy[1] = f * std::cos(lambda * t) - 2.0 * mu * y[1] - y[0] - y[0] * y[0] * y[0];
  };
  m.original.lift = [](double, std::span<const double> y, double) {
    return std::vector<double>{y[0], y[1], y[0] * y[0]};
  };
  m.start = {0.2, {0.0, 0.0}, 400.0, 0, 0.0};
  m.equilibrium_guess = [](double) { return std::vector<double>(3, 0.0); };
  return m;
}

Model rayleigh_plesset(double a, double b) {
  // Z = [u, v, x, y, z, r]
  auto sys = new_system(6)
                 .set_mass_entry(0, 0, 1.0)
                 .set_mass_entry(1, 1, 1.0)
                 .add_linear(LinearPart::L0, 0, 1, 1.0)
                 .add_linear(LinearPart::L0, 1, 2, -a)
                 .add_quadratic(1, 3, 3, a)
                 .add_quadratic(1, 2, 4, -1.5)
                 .add_quadratic(1, 2, 5, b)
                 .add_constant(ConstantPart::C0, 2, 1.0)
                 .add_quadratic(2, 0, 2, -1.0)
                 .add_linear(LinearPart::L0, 3, 3, 1.0)
                 .add_quadratic(3, 2, 2, -1.0)
                 .add_linear(LinearPart::L0, 4, 4, 1.0)
                 .add_quadratic(4, 1, 1, -1.0)
                 .add_constant(ConstantPart::C0, 5, -1.0, 1, Phase::Cos)
                 .add_linear(LinearPart::L0, 5, 5, 1.0)
                 .set_var_names({"u", "v", "x", "y", "z", "r"})
                 .set_original_indices({0, 1})
                 .build();

  Model m;
  m.name = "rayleigh_plesset";
  m.doc = "Forced bubble u u'' + 1.5 u'^2 = a (u^-3 - 1) + b cos(lambda t); x = 1/u, y = x^2, z = v^2, "
          "r = cos(lambda t).";
  m.system = std::move(sys);
  m.basis = {8, 6, 0, 1};
  m.window_on_omega = true;
  m.window_lo = 0.2;
  m.window_hi = 1.2;
  m.original.dim = 2;
  m.original.state_indices = {0, 1};
  m.original.rhs = [a, b](double t, std::span<const double> y, double lambda, std::span<double> dy) {
    const double u = y[0];
    dy[0] = y[1];
    dy[1] = (a * (1.0 / (u * u * u) - 1.0) - 1.5 * y[1] * y[1] + b * std::cos(lambda * t)) / u;
  };
  m.original.lift = [](double t, std::span<const double> y, double lambda) {
    const double x = 1.0 / y[0];
    return std::vector<double>{y[0], y[1], x, x * x, y[1] * y[1], std::cos(lambda * t)};
  };
  m.start = {0.5, {1.0, 0.0}, 0.0, 1, 0.0};
  m.equilibrium_guess = [](double) { return std::vector<double>{1.0, 0.0, 1.0, 1.0, 0.0, 0.0}; };
  return m;
}

std::vector<std::string> model_names() { return {"vdp", "rossler", "clarinet", "duffing", "rayleigh_plesset"}; }

Model model_by_name(const std::string& name) { return model_from_config(name, nlohmann::json::object()); }

namespace {

class ParamReader {
 public:
  ParamReader(const std::string& model, const nlohmann::json& params) : model_(model), params_(params) {
    if (!params_.is_null() && !params_.is_object()) throw ConfigError("model parameters must be a table");
  }

  double number(const char* key, double fallback) {
    used_.push_back(key);
    if (params_.is_null() || !params_.contains(key)) return fallback;
    if (!params_[key].is_number()) throw ConfigError(model_ + ": parameter '" + key + "' must be a number");
    return params_[key].get<double>();
  }

  std::vector<double> list(const char* key, std::vector<double> fallback) {
    used_.push_back(key);
    if (params_.is_null() || !params_.contains(key)) return fallback;
    try {
      return params_[key].get<std::vector<double>>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(model_ + ": parameter '" + key + "' must be a list of numbers");
    }
  }

  void finish() const {
    if (params_.is_null()) return;
    for (const auto& [key, value] : params_.items()) {
      if (std::find(used_.begin(), used_.end(), key) == used_.end()) {
        throw ConfigError(model_ + ": unknown parameter '" + key + "'");
      }
    }
  }

 private:
  std::string model_;
  const nlohmann::json& params_;
  std::vector<std::string> used_;
};

}  // namespace

Model model_from_config(const std::string& name, const nlohmann::json& params) {
  ParamReader r(name, params);
  Model m;
  if (name == "vdp") {
    m = vdp();
  } else if (name == "rossler") {
    const double a = r.number("a", 0.2);
    m = rossler(a, r.number("b", 0.2));
  } else if (name == "clarinet") {
    ClarinetParams p;
    p.q_r = r.number("q_r", p.q_r);
    p.omega_r = r.number("omega_r", p.omega_r);
    p.c = r.number("c", p.c);
    p.zeta = r.number("zeta", p.zeta);
    p.l = r.number("l", p.l);
    p.omegas = r.list("omegas", p.omegas);
    p.alphas = r.list("alphas", p.alphas);
    p.time_scale = r.number("time_scale", p.time_scale);
    m = clarinet(p);
  } else if (name == "duffing") {
    const double mu = r.number("mu", 0.1);
    m = duffing(mu, r.number("f", 1.25));
  } else if (name == "rayleigh_plesset") {
    const double a = r.number("a", 1.0);
    m = rayleigh_plesset(a, r.number("b", 0.1));
  } else {
    throw ConfigError("unknown model '" + name + "'");
  }
  r.finish();
  return m;
}

std::vector<double> BiochemModel::original_residual(double u1, double u2, double lambda) const {
  return {2.0 * u1 - u2 + 100.0 * u1 / (1.0 + u1 + u1 * u1) - lambda,
          2.0 * u2 - u1 + 100.0 * u2 / (1.0 + u2 + u2 * u2) - (lambda + mu)};
}

Eigen::VectorXd BiochemModel::lift(double u1, double u2, double lambda) const {
  const double v1 = u1 + u1 * u1;
  const double v2 = u2 + u2 * u2;
  Eigen::VectorXd u(7);
  u << u1, u2, v1, v2, 1.0 / (1.0 + v1), 1.0 / (1.0 + v2), lambda;
  return u;
}

BiochemModel biochem(double mu) {
  BiochemModel m;
  m.mu = mu;
  auto& ls = m.system;
  ls = make_algebraic_system(6);
  ls.lambda_index = 6;
  ls.constant = {0.0, -mu, 0.0, 0.0, -1.0, -1.0};
  auto& l = ls.linear;
  l.add(0, 0, 2.0), l.add(0, 1, -1.0), l.add(0, 6, -1.0);
  l.add(1, 1, 2.0), l.add(1, 0, -1.0), l.add(1, 6, -1.0);
  l.add(2, 2, 1.0), l.add(2, 0, -1.0);
  l.add(3, 3, 1.0), l.add(3, 1, -1.0);
  l.add(4, 4, 1.0);
  l.add(5, 5, 1.0);
  ls.quadratic = {{0, 0, 4, 100.0}, {1, 1, 5, 100.0}, {2, 0, 0, -1.0},
                  {3, 1, 1, -1.0},  {4, 2, 4, 1.0},   {5, 3, 5, 1.0}};
  ls.compress();
  return m;
}

}  // namespace qhbm
