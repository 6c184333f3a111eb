#include <doctest.h>

#include "qhbm/sparse.hpp"

using qhbm::SparseMatrix;

TEST_CASE("duplicates accumulate and compress merges them") {
  SparseMatrix m(2, 3);
  m.add(1, 2, 1.5);
  m.add(0, 0, 2.0);
  m.add(1, 2, -0.5);
  CHECK(m.coeff(1, 2) == doctest::Approx(1.0));
  m.compress();
  REQUIRE(m.entries().size() == 2);
  CHECK(m.entries()[0].row == 0);
  CHECK(m.entries()[1].value == doctest::Approx(1.0));
}

TEST_CASE("compress drops entries that cancel") {
  SparseMatrix m(2, 2);
  m.add(0, 1, 1.0);
  m.add(0, 1, -1.0);
  m.compress();
  CHECK(m.empty());
}

TEST_CASE("set overwrites") {
  SparseMatrix m(2, 2);
  m.add(1, 1, 3.0);
  m.add(1, 1, 4.0);
  m.set(1, 1, -2.0);
  CHECK(m.coeff(1, 1) == -2.0);
}

TEST_CASE("out of range entries throw") {
  SparseMatrix m(2, 2);
  CHECK_THROWS_AS(m.add(2, 0, 1.0), std::out_of_range);
  CHECK_THROWS_AS(m.add(0, 2, 1.0), std::out_of_range);
}

TEST_CASE("multiply matches the dense product") {
  SparseMatrix m(2, 3);
  m.add(0, 0, 1.0);
  m.add(0, 2, 2.0);
  m.add(1, 1, -3.0);
  const std::vector<double> x{1.0, 2.0, 3.0};
  const auto y = m.multiply(x);
  CHECK(y[0] == doctest::Approx(7.0));
  CHECK(y[1] == doctest::Approx(-6.0));
  CHECK_THROWS_AS(m.multiply(std::vector<double>{1.0}), qhbm::DimensionError);
}
