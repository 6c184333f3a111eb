#include "qhbm/branch_io.hpp"

#include <cstdio>
#include <istream>
#include <ostream>

namespace qhbm {

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::vector<BranchRecord> branch_records(const Branch& branch, bool with_series) {
  std::vector<BranchRecord> out;
  if (branch.sections.empty()) return out;
  BranchRecord first;
  first.u = branch.sections.front().start;
  out.push_back(std::move(first));
  int index = 1;
  for (const auto& s : branch.sections) {
    BranchRecord r;
    r.section = index++;
    r.a_max = s.a_max;
    r.residual_at_amax = s.residual_at_amax;
    r.rcond = s.rcond;
    r.u = s.end;
    if (with_series) r.coefficients = s.coefficients;
    out.push_back(std::move(r));
  }
  return out;
}

void write_branch_csv(std::ostream& os, const LiftedSystem& ls, const std::optional<HarmonicBasis>& basis,
                      const std::vector<std::string>& var_names, const Branch& branch) {
  os << "section,a_max,lambda,omega";
  if (basis) {
    for (std::size_t v = 0; v < basis->n_eq; ++v) {
      for (int k = 0; k <= basis->harmonics; ++k) os << ",A_" << var_names.at(v) << "_" << k;
    }
  } else {
    for (const auto& name : var_names) os << "," << name;
  }
  os << ",residual_norm\n";

  for (const auto& rec : branch_records(branch, false)) {
    const std::span<const double> u(rec.u.data(), static_cast<std::size_t>(rec.u.size()));
    os << rec.section << "," << format_double(rec.a_max) << ","
       << (ls.lambda_index || ls.forced() ? format_double(ls.lambda_of(u)) : "") << ","
       << (ls.omega_index ? format_double(ls.omega_of(u)) : "");
    if (basis) {
      const auto hv = harmonic_part(ls, *basis, u);
      for (std::size_t v = 0; v < basis->n_eq; ++v) {
        for (int k = 0; k <= basis->harmonics; ++k) os << "," << format_double(hv.amplitude(v, k));
      }
    } else {
      for (std::size_t i = 0; i < var_names.size(); ++i) os << "," << format_double(u[i]);
    }
    const auto r = residual_of<double>(ls, rec.u);
    os << "," << format_double(r.norm()) << "\n";
  }
}

namespace {

nlohmann::json vector_json(const Eigen::VectorXd& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& a) {
  if (!a.is_array()) throw ConfigError("branch file: expected an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

}  // namespace

void write_branch_jsonl(std::ostream& os, const nlohmann::json& header, const Branch& branch, bool with_series) {
  nlohmann::json h = header;
  h["type"] = "header";
  h["stop"] = to_string(branch.stop);
  if (!branch.message.empty()) h["message"] = branch.message;
  os << h.dump() << "\n";
  for (const auto& rec : branch_records(branch, with_series)) {
    nlohmann::json j;
    j["type"] = "point";
    j["section"] = rec.section;
    j["a_max"] = rec.a_max;
    j["residual_at_amax"] = rec.residual_at_amax;
    j["rcond"] = rec.rcond;
    j["u"] = vector_json(rec.u);
    if (!rec.coefficients.empty()) {
      nlohmann::json c = nlohmann::json::array();
      for (const auto& v : rec.coefficients) c.push_back(vector_json(v));
      j["coefficients"] = std::move(c);
    }
    os << j.dump() << "\n";
  }
}

BranchFile read_branch_jsonl(std::istream& is) {
  BranchFile out;
  std::string line;
  bool have_header = false;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& ex) {
      throw ConfigError("branch file line " + std::to_string(line_no) + ": " + ex.what());
    }
    const auto type = j.value("type", std::string{});
    if (type == "header") {
      out.header = std::move(j);
      have_header = true;
    } else if (type == "point") {
      BranchRecord r;
      try {
        r.section = j.at("section").get<int>();
        r.a_max = j.at("a_max").get<double>();
        r.residual_at_amax = j.value("residual_at_amax", 0.0);
        r.rcond = j.value("rcond", 0.0);
        r.u = vector_from_json(j.at("u"));
        if (j.contains("coefficients")) {
          for (const auto& c : j["coefficients"]) r.coefficients.push_back(vector_from_json(c));
        }
      } catch (const nlohmann::json::exception& ex) {
        throw ConfigError("branch file line " + std::to_string(line_no) + ": " + ex.what());
      }
      out.records.push_back(std::move(r));
    } else {
      throw ConfigError("branch file line " + std::to_string(line_no) + ": unknown record type");
    }
  }
  if (!have_header) throw ConfigError("branch file has no header");
  if (out.records.empty()) throw ConfigError("branch file contains no points");
  return out;
}

}  // namespace qhbm
