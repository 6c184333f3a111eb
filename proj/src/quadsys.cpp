#include "qhbm/quadsys.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace qhbm {

bool ForcedConstant::autonomous() const {
  for (const auto& e : entries) {
    if (e.harmonic != 0) return false;
  }
  return true;
}

void ForcedConstant::accumulate(double t, double forcing_frequency, std::span<double> out,
                                double scale) const {
  for (const auto& e : entries) {
    double factor = 1.0;
    if (e.harmonic != 0) {
      const double arg = e.harmonic * forcing_frequency * t;
      factor = e.phase == Phase::Cos ? std::cos(arg) : std::sin(arg);
    } else if (e.phase == Phase::Sin) {
      factor = 0.0;
    }
    out[e.equation] += scale * e.value * factor;
  }
}

std::size_t QuadraticSystem::differential_count() const {
  std::size_t n = 0;
  for (bool d : differential_mask) n += d ? 1 : 0;
  return n;
}

namespace {

std::string fmt_index(std::size_t i) { return std::to_string(i); }

void check_matrix(const SparseMatrix& m, const char* name, std::size_t n,
                  std::vector<std::string>& out) {
  if (m.rows() != n || m.cols() != n) {
    std::ostringstream os;
    os << name << " is " << m.rows() << "x" << m.cols() << ", expected " << n << "x" << n;
    out.push_back(os.str());
  }
  for (const auto& e : m.entries()) {
    if (e.row >= n || e.col >= n) {
      out.push_back(std::string(name) + " entry (" + fmt_index(e.row) + ", " + fmt_index(e.col) +
                    ") out of range [0, " + fmt_index(n) + ")");
    }
  }
}

void check_constant(const ForcedConstant& c, const char* name, std::size_t n,
                    std::vector<std::string>& out) {
  for (const auto& e : c.entries) {
    if (e.equation >= n) {
      out.push_back(std::string(name) + " entry for equation " + fmt_index(e.equation) +
                    " out of range [0, " + fmt_index(n) + ")");
    }
    if (e.harmonic < 0) {
      out.push_back(std::string(name) + " entry has negative harmonic " + std::to_string(e.harmonic));
    }
    if (e.harmonic == 0 && e.phase == Phase::Sin) {
      out.push_back(std::string(name) + " entry for equation " + fmt_index(e.equation) +
                    " has harmonic 0 with sin phase");
    }
  }
}

}  // namespace

std::vector<std::string> validate(const QuadraticSystem& sys) {
  std::vector<std::string> out;
  const std::size_t n = sys.n_eq;
  if (n == 0) {
    out.push_back("system has no equations (n_eq = 0)");
    return out;
  }
  check_matrix(sys.mass, "mass", n, out);
  check_matrix(sys.l0, "l0", n, out);
  check_matrix(sys.l1, "l1", n, out);
  check_constant(sys.c0, "c0", n, out);
  check_constant(sys.c1, "c1", n, out);
  for (const auto& e : sys.quad) {
    if (e.equation >= n || e.first >= n || e.second >= n) {
      out.push_back("quad entry (" + fmt_index(e.equation) + ", " + fmt_index(e.first) + ", " +
                    fmt_index(e.second) + ") out of range [0, " + fmt_index(n) + ")");
    }
  }
  if (!sys.var_names.empty() && sys.var_names.size() != n) {
    out.push_back("var_names has " + fmt_index(sys.var_names.size()) + " labels, expected " + fmt_index(n));
  }
  for (auto i : sys.original_indices) {
    if (i >= n) out.push_back("original index " + fmt_index(i) + " out of range");
  }

  if (sys.differential_mask.size() != n) {
    out.push_back("differential_mask has " + fmt_index(sys.differential_mask.size()) + " entries, expected " +
                  fmt_index(n));
  } else {
    std::vector<bool> has_mass(n, false);
    for (const auto& e : sys.mass.entries()) {
      if (e.row < n && e.value != 0.0) has_mass[e.row] = true;
    }
    for (std::size_t k = 0; k < n; ++k) {
      if (has_mass[k] != sys.differential_mask[k]) {
        out.push_back("differential_mask[" + fmt_index(k) + "] is " +
                      (sys.differential_mask[k] ? "true" : "false") + " but mass row " + fmt_index(k) +
                      (has_mass[k] ? " is nonzero" : " is zero"));
      }
    }
  }

  // Every row must be touched by at least one operator.
  std::vector<bool> touched(n, false);
  auto touch = [&](std::size_t r) {
    if (r < n) touched[r] = true;
  };
  for (const auto* m : {&sys.mass, &sys.l0, &sys.l1}) {
    for (const auto& e : m->entries()) touch(e.row);
  }
  for (const auto* c : {&sys.c0, &sys.c1}) {
    for (const auto& e : c->entries) touch(e.equation);
  }
  for (const auto& e : sys.quad) touch(e.equation);
  for (std::size_t k = 0; k < n; ++k) {
    if (!touched[k]) out.push_back("equation " + fmt_index(k) + " is empty (no operator touches it)");
  }
  return out;
}

std::vector<double> eval_quadratic(const QuadraticSystem& sys, std::span<const double> x,
                                   std::span<const double> y) {
  if (x.size() != sys.n_eq || y.size() != sys.n_eq) throw DimensionError("eval_quadratic: length mismatch");
  std::vector<double> out(sys.n_eq, 0.0);
  accumulate_quadratic<double>(sys.quad, x, y, out);
  return out;
}

std::vector<double> eval_residual_time(const QuadraticSystem& sys, std::span<const double> z,
                                       std::span<const double> zdot, double lambda, double t,
                                       double forcing_frequency) {
  const std::size_t n = sys.n_eq;
  if (z.size() != n || zdot.size() != n) {
    throw DimensionError("eval_residual_time: expected vectors of length " + std::to_string(n));
  }
  std::vector<double> rhs(n, 0.0);
  sys.c0.accumulate(t, forcing_frequency, rhs);
  sys.c1.accumulate(t, forcing_frequency, rhs, lambda);
  sys.l0.multiply_add<double>(z, rhs);
  sys.l1.multiply_add<double>(z, rhs, lambda);
  accumulate_quadratic<double>(sys.quad, z, z, rhs);

  std::vector<double> res(n, 0.0);
  sys.mass.multiply_add<double>(zdot, res);
  for (std::size_t k = 0; k < n; ++k) res[k] -= rhs[k];
  return res;
}

SystemBuilder::SystemBuilder(std::size_t n_eq) {
  sys_.n_eq = n_eq;
  sys_.mass = SparseMatrix(n_eq, n_eq);
  sys_.l0 = SparseMatrix(n_eq, n_eq);
  sys_.l1 = SparseMatrix(n_eq, n_eq);
}

void SystemBuilder::check_index(std::size_t i, const char* what) const {
  if (i >= sys_.n_eq) {
    throw std::out_of_range(std::string(what) + " index " + std::to_string(i) + " out of range [0, " +
                            std::to_string(sys_.n_eq) + ")");
  }
}

SystemBuilder& SystemBuilder::set_mass_entry(std::size_t row, std::size_t col, double value) {
  sys_.mass.set(row, col, value);
  return *this;
}

SystemBuilder& SystemBuilder::add_constant(ConstantPart part, std::size_t equation, double value, int harmonic,
                                           Phase phase) {
  check_index(equation, "constant equation");
  if (harmonic < 0) throw std::out_of_range("negative harmonic index");
  if (harmonic == 0 && phase == Phase::Sin) throw std::invalid_argument("harmonic 0 cannot carry sin phase");
  auto& c = part == ConstantPart::C0 ? sys_.c0 : sys_.c1;
  c.entries.push_back({harmonic, phase, equation, value});
  return *this;
}

SystemBuilder& SystemBuilder::add_linear(LinearPart part, std::size_t row, std::size_t col, double value) {
  (part == LinearPart::L0 ? sys_.l0 : sys_.l1).add(row, col, value);
  return *this;
}

SystemBuilder& SystemBuilder::add_quadratic(std::size_t equation, std::size_t first, std::size_t second,
                                            double coefficient) {
  check_index(equation, "quadratic equation");
  check_index(first, "quadratic first");
  check_index(second, "quadratic second");
  for (auto& e : sys_.quad) {
    if (e.equation == equation && e.first == first && e.second == second) {
      e.coefficient += coefficient;
      return *this;
    }
  }
  sys_.quad.push_back({equation, first, second, coefficient});
  return *this;
}

SystemBuilder& SystemBuilder::set_var_names(std::vector<std::string> names) {
  if (names.size() != sys_.n_eq) throw std::out_of_range("var_names length differs from n_eq");
  sys_.var_names = std::move(names);
  return *this;
}

SystemBuilder& SystemBuilder::set_original_indices(std::vector<std::size_t> indices) {
  for (auto i : indices) check_index(i, "original");
  sys_.original_indices = std::move(indices);
  return *this;
}

QuadraticSystem SystemBuilder::build() const {
  QuadraticSystem out = sys_;
  out.mass.compress();
  out.l0.compress();
  out.l1.compress();
  std::erase_if(out.quad, [](const QuadEntry& e) { return e.coefficient == 0.0; });
  out.differential_mask.assign(out.n_eq, false);
  for (const auto& e : out.mass.entries()) out.differential_mask[e.row] = true;
  if (out.var_names.empty()) {
    for (std::size_t k = 0; k < out.n_eq; ++k) out.var_names.push_back("z" + std::to_string(k));
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

nlohmann::json triplets_json(const SparseMatrix& m) {
  auto arr = nlohmann::json::array();
  for (const auto& e : m.entries()) arr.push_back({e.row, e.col, e.value});
  return arr;
}

nlohmann::json constant_json(const ForcedConstant& c) {
  auto arr = nlohmann::json::array();
  for (const auto& e : c.entries) {
    arr.push_back({{"harmonic", e.harmonic},
                   {"phase", e.phase == Phase::Cos ? "cos" : "sin"},
                   {"equation", e.equation},
                   {"value", e.value}});
  }
  return arr;
}

SparseMatrix triplets_from(const nlohmann::json& doc, const char* key, std::size_t n) {
  SparseMatrix m(n, n);
  if (!doc.contains(key)) return m;
  for (const auto& t : doc.at(key)) {
    if (!t.is_array() || t.size() != 3) throw ConfigError(std::string(key) + ": expected [row, col, value] triplets");
    m.add_unchecked(t[0].get<std::size_t>(), t[1].get<std::size_t>(), t[2].get<double>());
  }
  return m;
}

ForcedConstant constant_from(const nlohmann::json& doc, const char* key) {
  ForcedConstant c;
  if (!doc.contains(key)) return c;
  for (const auto& e : doc.at(key)) {
    ForcingEntry f;
    f.harmonic = e.value("harmonic", 0);
    const auto phase = e.value("phase", std::string("cos"));
    if (phase != "cos" && phase != "sin") throw ConfigError(std::string(key) + ": phase must be cos or sin");
    f.phase = phase == "cos" ? Phase::Cos : Phase::Sin;
    f.equation = e.at("equation").get<std::size_t>();
    f.value = e.at("value").get<double>();
    c.entries.push_back(f);
  }
  return c;
}

}  // namespace

nlohmann::json to_json(const QuadraticSystem& sys) {
  nlohmann::json doc;
  doc["n_eq"] = sys.n_eq;
  doc["mass"] = triplets_json(sys.mass);
  doc["c0"] = constant_json(sys.c0);
  doc["c1"] = constant_json(sys.c1);
  doc["l0"] = triplets_json(sys.l0);
  doc["l1"] = triplets_json(sys.l1);
  auto quad = nlohmann::json::array();
  for (const auto& e : sys.quad) quad.push_back({e.equation, e.first, e.second, e.coefficient});
  doc["quad"] = quad;
  doc["var_names"] = sys.var_names;
  doc["original_indices"] = sys.original_indices;
  return doc;
}

QuadraticSystem system_from_json(const nlohmann::json& doc) {
  try {
    QuadraticSystem sys;
    sys.n_eq = doc.at("n_eq").get<std::size_t>();
    const auto n = sys.n_eq;
    sys.mass = triplets_from(doc, "mass", n);
    sys.l0 = triplets_from(doc, "l0", n);
    sys.l1 = triplets_from(doc, "l1", n);
    sys.c0 = constant_from(doc, "c0");
    sys.c1 = constant_from(doc, "c1");
    if (doc.contains("quad")) {
      for (const auto& q : doc.at("quad")) {
        if (!q.is_array() || q.size() != 4) throw ConfigError("quad: expected [eq, i, j, coefficient]");
        sys.quad.push_back(
            {q[0].get<std::size_t>(), q[1].get<std::size_t>(), q[2].get<std::size_t>(), q[3].get<double>()});
      }
    }
    if (doc.contains("var_names")) sys.var_names = doc.at("var_names").get<std::vector<std::string>>();
    if (doc.contains("original_indices")) {
      sys.original_indices = doc.at("original_indices").get<std::vector<std::size_t>>();
    }
    sys.differential_mask.assign(n, false);
    for (const auto& e : sys.mass.entries()) {
      if (e.row < n && e.value != 0.0) sys.differential_mask[e.row] = true;
    }
    return sys;
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("model JSON: ") + ex.what());
  }
}

void save_system(const QuadraticSystem& sys, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << to_json(sys).dump(2) << '\n';
}

QuadraticSystem load_system(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read " + path.string());
  nlohmann::json doc;
  try {
    is >> doc;
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(path.string() + ": " + ex.what());
  }
  return system_from_json(doc);
}

}  // namespace qhbm
