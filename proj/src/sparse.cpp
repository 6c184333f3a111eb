#include "qhbm/sparse.hpp"

#include <algorithm>
#include <string>

namespace qhbm {

void SparseMatrix::add(std::size_t row, std::size_t col, double value) {
  if (row >= rows_ || col >= cols_) {
    throw std::out_of_range("sparse entry (" + std::to_string(row) + ", " + std::to_string(col) +
                            ") outside " + std::to_string(rows_) + "x" + std::to_string(cols_));
  }
  entries_.push_back({row, col, value});
}

void SparseMatrix::set(std::size_t row, std::size_t col, double value) {
  std::erase_if(entries_, [&](const Triplet& e) { return e.row == row && e.col == col; });
  add(row, col, value);
}

void SparseMatrix::add_unchecked(std::size_t row, std::size_t col, double value) {
  entries_.push_back({row, col, value});
}

void SparseMatrix::compress() {
  std::stable_sort(entries_.begin(), entries_.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  std::vector<Triplet> merged;
  merged.reserve(entries_.size());
  for (const auto& e : entries_) {
    if (!merged.empty() && merged.back().row == e.row && merged.back().col == e.col) {
      merged.back().value += e.value;
    } else {
      merged.push_back(e);
    }
  }
  std::erase_if(merged, [](const Triplet& e) { return e.value == 0.0; });
  entries_ = std::move(merged);
}

double SparseMatrix::coeff(std::size_t row, std::size_t col) const {
  double sum = 0.0;
  for (const auto& e : entries_) {
    if (e.row == row && e.col == col) sum += e.value;
  }
  return sum;
}

std::vector<double> SparseMatrix::multiply(std::span<const double> x) const {
  if (x.size() != cols_) throw DimensionError("sparse multiply: vector length mismatch");
  std::vector<double> y(rows_, 0.0);
  multiply_add<double>(x, y);
  return y;
}

}  // namespace qhbm
