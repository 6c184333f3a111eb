#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "qhbm/anm.hpp"
#include "qhbm/hbm.hpp"

namespace qhbm {

/// Shortest round-trip decimal form of a double ("%.17g").
std::string format_double(double x);

/// One exported point of a branch: the start (section 0) or a section end.
struct BranchRecord {
  int section = 0;
  double a_max = 0.0;
  double residual_at_amax = 0.0;
  double rcond = 0.0;
  Eigen::VectorXd u;
  /// Series u_1..u_n of the section ending here; empty unless exported.
  std::vector<Eigen::VectorXd> coefficients;
};

/// Branch table with one row per point:
/// section,a_max,lambda,omega,A_{var}_{k}...,residual_norm
/// For systems without a harmonic basis the unknowns are written instead of amplitudes.
void write_branch_csv(std::ostream& os, const LiftedSystem& ls, const std::optional<HarmonicBasis>& basis,
                      const std::vector<std::string>& var_names, const Branch& branch);

/// JSON-lines stream: a header object followed by one object per point.
/// Series coefficients are included when `with_series` is set.
void write_branch_jsonl(std::ostream& os, const nlohmann::json& header, const Branch& branch, bool with_series);

struct BranchFile {
  nlohmann::json header;
  std::vector<BranchRecord> records;
};

/// Reads a stream written by write_branch_jsonl. Throws ConfigError when the
/// stream is empty or malformed.
BranchFile read_branch_jsonl(std::istream& is);

/// Records of a branch in export order (start, then every section end).
std::vector<BranchRecord> branch_records(const Branch& branch, bool with_series);

}  // namespace qhbm
