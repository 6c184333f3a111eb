#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "qhbm/error.hpp"

namespace qhbm {

struct Triplet {
  std::size_t row = 0;
  std::size_t col = 0;
  double value = 0.0;

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

/// Coordinate-format real matrix. Entries are kept sorted by (row, col) with
/// duplicates summed once compress() has run.
class SparseMatrix {
 public:
  SparseMatrix() = default;
  SparseMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  const std::vector<Triplet>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }

  /// Appends value at (row, col); duplicates accumulate.
  void add(std::size_t row, std::size_t col, double value);
  /// Overwrites any existing entries at (row, col).
  void set(std::size_t row, std::size_t col, double value);
  /// Appends without a bounds check; used by deserialization so that
  /// validate() can report bad indices instead of throwing.
  void add_unchecked(std::size_t row, std::size_t col, double value);

  /// Sorts, merges duplicates and drops exact zeros.
  void compress();

  /// Coefficient at (row, col), summing duplicates.
  double coeff(std::size_t row, std::size_t col) const;

  /// y += scale * A x
  template <class Scalar>
  void multiply_add(std::span<const Scalar> x, std::span<Scalar> y, double scale = 1.0) const {
    for (const auto& e : entries_) y[e.row] += Scalar(scale * e.value) * x[e.col];
  }

  std::vector<double> multiply(std::span<const double> x) const;

  friend bool operator==(const SparseMatrix&, const SparseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Triplet> entries_;
};

}  // namespace qhbm
