#include "qhbm/hbm.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace qhbm {

std::size_t HarmonicBasis::offset(int k, Phase phase) const {
  if (k < 0 || k > harmonics) throw std::out_of_range("harmonic " + std::to_string(k) + " outside [0, H]");
  if (k == 0) return 0;
  return (phase == Phase::Cos ? cos_slot(k) : sin_slot(k)) * n_eq;
}

HarmonicVector::HarmonicVector(HarmonicBasis basis) : basis_(basis), data_(basis.dof(), 0.0) {}

HarmonicVector::HarmonicVector(HarmonicBasis basis, std::vector<double> data)
    : basis_(basis), data_(std::move(data)) {
  if (data_.size() != basis_.dof()) {
    throw DimensionError("harmonic vector has " + std::to_string(data_.size()) + " entries, basis needs " +
                         std::to_string(basis_.dof()));
  }
}

std::span<double> HarmonicVector::block(int k, Phase phase) {
  return std::span<double>(data_).subspan(basis_.offset(k, phase), basis_.n_eq);
}

std::span<const double> HarmonicVector::block(int k, Phase phase) const {
  return std::span<const double>(data_).subspan(basis_.offset(k, phase), basis_.n_eq);
}

double HarmonicVector::amplitude(std::size_t var, int k) const {
  if (k == 0) return std::abs(block(0)[var]);
  return std::hypot(block(k, Phase::Cos)[var], block(k, Phase::Sin)[var]);
}

namespace {

void require_positive_omega(double omega) {
  if (!(omega > 0.0)) throw std::invalid_argument("omega must be positive (period undefined)");
}

}  // namespace

std::vector<double> synthesize(const HarmonicVector& u, double omega, double t) {
  require_positive_omega(omega);
  const auto& b = u.basis();
  std::vector<double> z(u.block(0).begin(), u.block(0).end());
  const double base = omega / b.grid_divisor();
  for (int k = 1; k <= b.harmonics; ++k) {
    const double c = std::cos(k * base * t);
    const double s = std::sin(k * base * t);
    const auto zc = u.block(k, Phase::Cos);
    const auto zs = u.block(k, Phase::Sin);
    for (std::size_t i = 0; i < b.n_eq; ++i) z[i] += zc[i] * c + zs[i] * s;
  }
  return z;
}

std::vector<double> synthesize_rate(const HarmonicVector& u, double omega, double t) {
  require_positive_omega(omega);
  const auto& b = u.basis();
  std::vector<double> dz(b.n_eq, 0.0);
  const double base = omega / b.grid_divisor();
  for (int k = 1; k <= b.harmonics; ++k) {
    const double w = k * base;
    const double c = std::cos(w * t);
    const double s = std::sin(w * t);
    const auto zc = u.block(k, Phase::Cos);
    const auto zs = u.block(k, Phase::Sin);
    for (std::size_t i = 0; i < b.n_eq; ++i) dz[i] += w * (zs[i] * c - zc[i] * s);
  }
  return dz;
}

std::vector<double> lift_constant(const ForcedConstant& c, const HarmonicBasis& basis) {
  std::vector<double> out(basis.dof(), 0.0);
  const int p = basis.forcing_multiple.value_or(1);
  for (const auto& e : c.entries) {
    if (e.equation >= basis.n_eq) throw std::out_of_range("constant entry equation out of range");
    if (e.harmonic == 0) {
      out[e.equation] += e.value;
      continue;
    }
    const int slot = e.harmonic * p * basis.grid_divisor();
    if (slot > basis.harmonics) {
      throw std::out_of_range("forcing harmonic " + std::to_string(e.harmonic) + " lands on slot " +
                              std::to_string(slot) + " > H = " + std::to_string(basis.harmonics));
    }
    out[basis.offset(slot, e.phase) + e.equation] += e.value;
  }
  return out;
}

std::vector<double> apply_linear(const SparseMatrix& l, const HarmonicVector& u) {
  const auto& b = u.basis();
  std::vector<double> out(b.dof(), 0.0);
  for (std::size_t blk = 0; blk < b.block_count(); ++blk) {
    const std::size_t off = blk * b.n_eq;
    for (const auto& e : l.entries()) out[off + e.row] += e.value * u.data()[off + e.col];
  }
  return out;
}

std::vector<double> apply_mass(const SparseMatrix& m, const HarmonicVector& u) {
  const auto& b = u.basis();
  std::vector<double> out(b.dof(), 0.0);
  const double div = b.grid_divisor();
  for (int k = 1; k <= b.harmonics; ++k) {
    const double f = k / div;
    const std::size_t oc = b.offset(k, Phase::Cos);
    const std::size_t os = b.offset(k, Phase::Sin);
    for (const auto& e : m.entries()) {
      out[oc + e.row] += f * e.value * u.data()[os + e.col];
      out[os + e.row] -= f * e.value * u.data()[oc + e.col];
    }
  }
  return out;
}

std::vector<double> apply_quadratic(std::span<const QuadEntry> quad, const HarmonicVector& x,
                                    const HarmonicVector& y) {
  if (!(x.basis() == y.basis())) throw DimensionError("apply_quadratic: operands use different bases");
  const auto& b = x.basis();
  const std::size_t ne = b.n_eq;
  std::vector<double> out(b.dof(), 0.0);
  const auto xd = x.data();
  const auto yd = y.data();
  for_each_product_term(b.harmonics, [&](std::size_t o, std::size_t xs, std::size_t ys, double w) {
    for (const auto& e : quad) {
      out[o * ne + e.equation] += w * e.coefficient * xd[xs * ne + e.first] * yd[ys * ne + e.second];
    }
  });
  return out;
}

PhaseSpec default_phase(const QuadraticSystem& sys) {
  for (std::size_t k = 0; k < sys.differential_mask.size(); ++k) {
    if (sys.differential_mask[k]) return {k, 0};
  }
  return {0, 0};
}

LiftedSystem assemble(const QuadraticSystem& sys, const HarmonicBasis& basis,
                      const std::optional<PhaseSpec>& phase) {
  if (basis.n_eq != sys.n_eq) throw DimensionError("basis n_eq differs from system n_eq");
  if (basis.harmonics < 1) throw ConfigError("number of harmonics must be positive");
  if (basis.subharmonic_exponent < 0) throw ConfigError("subharmonic exponent must be >= 0");
  const bool forced = basis.forcing_multiple.has_value();
  if (sys.forced() && !forced) throw ConfigError("forced system needs a forcing multiple in the basis");
  if (forced) {
    if (*basis.forcing_multiple < 1) throw ConfigError("forcing multiple must be >= 1");
    if (phase) throw ConfigError("forced systems take no phase condition");
    if (!sys.c1.empty() || !sys.l1.empty()) {
      throw ConfigError("forced system has lambda-proportional terms but lambda is tied to omega");
    }
  } else if (!phase) {
    throw ConfigError("autonomous system needs a phase condition");
  }

  const std::size_t ne = sys.n_eq;
  const std::size_t dof = basis.dof();
  const int h = basis.harmonics;
  LiftedSystem ls = make_algebraic_system(forced ? dof : dof + 1);
  ls.harmonic_dof = dof;
  std::size_t lam = 0;
  std::size_t om = 0;
  if (forced) {
    om = dof;
    ls.omega_index = om;
    ls.forcing_multiple = *basis.forcing_multiple;
  } else {
    lam = dof;
    om = dof + 1;
    ls.lambda_index = lam;
    ls.omega_index = om;
    ls.phase_row = dof;
  }

  const auto c0 = lift_constant(sys.c0, basis);
  std::copy(c0.begin(), c0.end(), ls.constant.begin());

  for (std::size_t blk = 0; blk < basis.block_count(); ++blk) {
    for (const auto& e : sys.l0.entries()) ls.linear.add(blk * ne + e.row, blk * ne + e.col, e.value);
  }

  if (!forced) {
    const auto c1 = lift_constant(sys.c1, basis);
    for (std::size_t i = 0; i < dof; ++i) {
      if (c1[i] != 0.0) ls.linear.add(i, lam, c1[i]);
    }
    const int slot = phase->harmonic == 0 ? basis.fundamental_slot() : phase->harmonic;
    if (slot < 1 || slot > h) throw ConfigError("phase harmonic " + std::to_string(slot) + " outside [1, H]");
    if (phase->variable >= ne) throw ConfigError("phase variable out of range");
    ls.linear.add(dof, basis.offset(slot, Phase::Sin) + phase->variable, 1.0);
  }

  auto& terms = ls.quadratic;
  for (const auto& e : sys.quad) {
    for_each_product_term(h, [&](std::size_t o, std::size_t xs, std::size_t ys, double w) {
      terms.push_back({o * ne + e.equation, xs * ne + e.first, ys * ne + e.second, w * e.coefficient});
    });
  }
  if (!forced) {
    for (std::size_t blk = 0; blk < basis.block_count(); ++blk) {
      for (const auto& e : sys.l1.entries()) terms.push_back({blk * ne + e.row, lam, blk * ne + e.col, e.value});
    }
  }
  const double div = basis.grid_divisor();
  for (int k = 1; k <= h; ++k) {
    const double f = k / div;
    const std::size_t oc = basis.offset(k, Phase::Cos);
    const std::size_t os = basis.offset(k, Phase::Sin);
    for (const auto& e : sys.mass.entries()) {
      terms.push_back({oc + e.row, om, os + e.col, -f * e.value});
      terms.push_back({os + e.row, om, oc + e.col, f * e.value});
    }
  }
  ls.compress();
  return ls;
}

HarmonicVector harmonic_part(const LiftedSystem& ls, const HarmonicBasis& basis, std::span<const double> u) {
  if (!ls.harmonic_dof || *ls.harmonic_dof != basis.dof()) throw DimensionError("basis does not match lifted system");
  if (u.size() != ls.n_unknown()) throw DimensionError("extended point has wrong length");
  return HarmonicVector(basis, std::vector<double>(u.begin(), u.begin() + static_cast<std::ptrdiff_t>(basis.dof())));
}

std::vector<double> extended_point(const LiftedSystem& ls, const HarmonicVector& u, double lambda, double omega) {
  if (!ls.harmonic_dof || *ls.harmonic_dof != u.data().size()) throw DimensionError("basis does not match lifted system");
  std::vector<double> out(u.data().begin(), u.data().end());
  out.resize(ls.n_unknown(), 0.0);
  if (ls.lambda_index) out[*ls.lambda_index] = lambda;
  if (ls.omega_index) out[*ls.omega_index] = omega;
  return out;
}

HarmonicVector embed(const HarmonicVector& u, const HarmonicBasis& target) {
  const auto& src = u.basis();
  if (src.n_eq != target.n_eq) throw DimensionError("embed: n_eq differs");
  if (target.subharmonic_exponent < src.subharmonic_exponent) {
    throw std::invalid_argument("embed: target grid must not be coarser");
  }
  const int ratio = 1 << (target.subharmonic_exponent - src.subharmonic_exponent);
  HarmonicVector out(target);
  std::copy(u.block(0).begin(), u.block(0).end(), out.block(0).begin());
  for (int k = 1; k <= src.harmonics && k * ratio <= target.harmonics; ++k) {
    for (auto ph : {Phase::Cos, Phase::Sin}) {
      const auto s = u.block(k, ph);
      std::copy(s.begin(), s.end(), out.block(k * ratio, ph).begin());
    }
  }
  return out;
}

nlohmann::json to_json(const HarmonicVector& u) {
  nlohmann::json doc;
  doc["H"] = u.basis().harmonics;
  doc["n_eq"] = u.basis().n_eq;
  doc["K"] = u.basis().subharmonic_exponent;
  if (u.basis().forcing_multiple) doc["forcing_multiple"] = *u.basis().forcing_multiple;
  doc["data"] = std::vector<double>(u.data().begin(), u.data().end());
  return doc;
}

HarmonicVector harmonic_vector_from_json(const nlohmann::json& doc) {
  try {
    HarmonicBasis b;
    b.harmonics = doc.at("H").get<int>();
    b.n_eq = doc.at("n_eq").get<std::size_t>();
    b.subharmonic_exponent = doc.value("K", 0);
    if (doc.contains("forcing_multiple")) b.forcing_multiple = doc.at("forcing_multiple").get<int>();
    return HarmonicVector(b, doc.at("data").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("harmonic vector JSON: ") + ex.what());
  }
}

}  // namespace qhbm
