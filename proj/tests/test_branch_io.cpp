#include <doctest.h>

#include <sstream>

#include "qhbm/branch_io.hpp"
#include "qhbm/models.hpp"
#include "qhbm/start.hpp"
#include "support.hpp"

using namespace qhbm;
using namespace qhbm::testing;

namespace {

std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

Branch circle_branch(int sections) {
  AnmSettings s;
  s.order = 12;
  s.max_sections = static_cast<std::size_t>(sections);
  return continue_branch(circle_system(), vec({1.0, 0.0}), vec({0.0, 1.0}), s);
}

}  // namespace

TEST_CASE("format_double round-trips") {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const double x = rng.uniform(-1e3, 1e3) * std::pow(10.0, rng.integer(-30, 30));
    CHECK(std::stod(format_double(x)) == x);
  }
  CHECK(format_double(0.5) == "0.5");
}

TEST_CASE("csv of an algebraic branch lists the unknowns") {
  const auto br = circle_branch(3);
  std::ostringstream os;
  write_branch_csv(os, circle_system(), std::nullopt, {"x", "y"}, br);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "section,a_max,lambda,omega,x,y,residual_norm");
  int rows = 0;
  while (std::getline(is, line)) {
    const auto cells = split(line);
    REQUIRE(cells.size() == 7);
    CHECK(std::stoi(cells[0]) == rows);
    CHECK(cells[2].empty());
    CHECK(cells[3].empty());
    const double x = std::stod(cells[4]);
    const double y = std::stod(cells[5]);
    CHECK(std::abs(std::abs(x * x + y * y - 1.0) - std::stod(cells[6])) <= 1e-15);
    ++rows;
  }
  CHECK(rows == 4);
}

TEST_CASE("csv of a harmonic branch carries amplitudes per variable and harmonic") {
  const auto m = vdp();
  const HarmonicBasis b{4, 4, 0, std::nullopt};
  const auto ls = assemble(m.system, b, m.phase);
  const auto sp = start_from_oracle(m, ls, b, 1.0, 1e-8);
  AnmSettings s;
  s.max_sections = 2;
  const auto br = continue_branch(ls, sp.u, axis_direction(ls, *ls.lambda_index), s);
  std::ostringstream os;
  write_branch_csv(os, ls, b, m.system.var_names, br);
  std::istringstream is(os.str());
  std::string header;
  std::getline(is, header);
  const auto cols = split(header);
  CHECK(cols.size() == 4 + 4 * 5 + 1);
  CHECK(cols[4] == "A_u_0");
  CHECK(cols[5] == "A_u_1");
  CHECK(cols[9] == "A_v_0");
  std::string first;
  std::getline(is, first);
  const auto cells = split(first);
  CHECK(std::stod(cells[2]) == doctest::Approx(1.0));
  const auto hv = harmonic_part(ls, b, view(sp.u));
  CHECK(std::stod(cells[5]) == hv.amplitude(0, 1));
}

TEST_CASE("jsonl round trip preserves every point bit for bit") {
  const auto br = circle_branch(4);
  nlohmann::json header{{"model", "circle"}, {"seed", 7}};
  std::ostringstream os;
  write_branch_jsonl(os, header, br, true);
  std::istringstream is(os.str());
  const auto file = read_branch_jsonl(is);
  CHECK(file.header["model"] == "circle");
  CHECK(file.header["type"] == "header");
  CHECK(file.header["stop"] == to_string(br.stop));
  const auto expected = branch_records(br, true);
  REQUIRE(file.records.size() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    CHECK(file.records[i].section == expected[i].section);
    CHECK(file.records[i].a_max == expected[i].a_max);
    CHECK(file.records[i].u == expected[i].u);
    REQUIRE(file.records[i].coefficients.size() == expected[i].coefficients.size());
    for (std::size_t k = 0; k < expected[i].coefficients.size(); ++k) {
      CHECK(file.records[i].coefficients[k] == expected[i].coefficients[k]);
    }
  }
  CHECK(file.records.front().coefficients.empty());
}

TEST_CASE("malformed branch files are configuration errors") {
  auto read = [](const std::string& text) {
    std::istringstream is(text);
    return read_branch_jsonl(is);
  };
  CHECK_THROWS_AS(read(""), ConfigError);
  CHECK_THROWS_AS(read("{\"type\":\"header\"}\n"), ConfigError);
  CHECK_THROWS_AS(read("{\"type\":\"point\",\"section\":0,\"a_max\":0,\"u\":[1]}\n"), ConfigError);
  CHECK_THROWS_AS(read("{\"type\":\"header\"}\nnot json\n"), ConfigError);
  CHECK_THROWS_AS(read("{\"type\":\"header\"}\n{\"type\":\"point\",\"section\":0}\n"), ConfigError);
  CHECK_THROWS_AS(read("{\"type\":\"header\"}\n{\"type\":\"other\"}\n"), ConfigError);
  CHECK_THROWS_AS(read("{\"type\":\"header\"}\n{\"type\":\"point\",\"section\":0,\"a_max\":0,\"u\":3}\n"), ConfigError);
  CHECK(read("{\"type\":\"header\"}\n\n{\"type\":\"point\",\"section\":0,\"a_max\":0,\"u\":[1,2]}\n").records.size() == 1);
}
