#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "noisylr/io.hpp"
#include "oracles.hpp"

using namespace noisylr;

TEST_CASE("parse_libsvm basic lines", "[io]") {
  std::istringstream in("1 3:0.5\n-1 1:2\n");
  const auto data = parse_libsvm(in);
  REQUIRE(data.x.rows() == 2);
  REQUIRE(data.x.cols() == 3);
  REQUIRE(data.y == std::vector<int>{1, 0});
  const auto dense = data.x.to_dense();
  REQUIRE(dense(0, 2) == Catch::Approx(0.5));
  REQUIRE(dense(1, 0) == Catch::Approx(2.0));
  REQUIRE(dense(0, 0) == 0.0);
}

TEST_CASE("parse_libsvm rejects bad input", "[io]") {
  std::istringstream empty("");
  REQUIRE_THROWS_WITH(parse_libsvm(empty), Catch::Matchers::ContainsSubstring("no rows"));

  std::istringstream decreasing("1 3:1 2:1\n");
  REQUIRE_THROWS_WITH(parse_libsvm(decreasing),
                      Catch::Matchers::ContainsSubstring("line 1"));

  std::istringstream junk("1 a:1\n");
  REQUIRE_THROWS_AS(parse_libsvm(junk), std::runtime_error);

  std::istringstream overflow("1 5:1\n");
  REQUIRE_THROWS_AS(parse_libsvm(overflow, 3), std::runtime_error);
}

TEST_CASE("parse_libsvm dims override widens the matrix", "[io]") {
  std::istringstream in("1 2:1\n");
  const auto data = parse_libsvm(in, 10);
  REQUIRE(data.x.cols() == 10);
}

TEST_CASE("libsvm round trip preserves values", "[io]") {
  SyntheticSpec spec{40, simulation_beta_star(), 0.75, 81};
  auto [x, y] = gen_synthetic(spec);
  std::ostringstream out;
  write_libsvm(out, x, y);
  std::istringstream in(out.str());
  const auto back = parse_libsvm(in);
  REQUIRE(back.x.rows() == 40);
  REQUIRE(back.x.cols() == 9);
  REQUIRE(back.y == y);
  REQUIRE((back.x.to_dense() - x.to_dense()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("split_train_test is seeded, disjoint, exhaustive", "[io]") {
  SyntheticSpec spec{50, Vector::Ones(3), 0.0, 82};
  auto [x, y] = gen_synthetic(spec);
  LibsvmData data{x, y};

  REQUIRE_THROWS_AS(split_train_test(data, 50, 1), std::invalid_argument);

  const auto a = split_train_test(data, 30, 7);
  const auto b = split_train_test(data, 30, 7);
  REQUIRE(a.train_idx == b.train_idx);
  REQUIRE(a.test.x.rows() == 20);

  std::vector<char> seen(50, 0);
  for (Index i : a.train_idx) seen[static_cast<std::size_t>(i)] += 1;
  for (Index i : a.test_idx) seen[static_cast<std::size_t>(i)] += 1;
  for (char c : seen) REQUIRE(c == 1);

  const auto c = split_train_test(data, 30, 8);
  REQUIRE(c.train_idx != a.train_idx);
}

TEST_CASE("counts file round trip", "[io]") {
  CountVector s;
  s.m = 5;
  s.counts = {0, 5, 3, 2, 1};
  std::ostringstream out;
  write_counts(out, s);
  REQUIRE(out.str().rfind("m=5\n", 0) == 0);
  std::istringstream in(out.str());
  const auto back = read_counts(in);
  REQUIRE(back.m == 5);
  REQUIRE(back.counts == s.counts);
}

TEST_CASE("coefficients JSON round trip", "[io]") {
  Vector v(4);
  v << 0.0, 1.25, 0.0, -3.5;
  const auto c = Coefficients::from_values(v);
  const auto path = std::filesystem::temp_directory_path() / "noisylr_coef_test.json";
  write_coefficients_json(path.string(), c, 1.0, 2.5);
  const auto back = read_coefficients_json(path.string());
  REQUIRE(back.values.isApprox(c.values));
  REQUIRE(back.support == c.support);
  std::ifstream in(path);
  nlohmann::json j;
  in >> j;
  REQUIRE(j["meta"]["lambda"] == 2.5);
  std::filesystem::remove(path);
}

TEST_CASE("trace CSV schema", "[io]") {
  IterationTrace t;
  t.primal_res = {1.0, 0.5};
  t.dual_res = {2.0, 0.25};
  t.objective = {10.0, 9.0};
  t.h_step = {3.0, 1.5};
  const auto dir = std::filesystem::temp_directory_path();

  const auto serial_path = (dir / "noisylr_trace_serial.csv").string();
  write_trace_csv(serial_path, t);
  std::ifstream f(serial_path);
  std::string header;
  std::getline(f, header);
  REQUIRE(header == "iter,primal_res,dual_res,objective,h_step");

  t.workers = 4;
  const auto par_path = (dir / "noisylr_trace_par.csv").string();
  write_trace_csv(par_path, t);
  std::ifstream g(par_path);
  std::getline(g, header);
  REQUIRE(header == "iter,primal_res,dual_res,objective,h_step,G");
  std::string row;
  std::getline(g, row);
  REQUIRE(row.substr(row.size() - 2) == ",4");
  std::filesystem::remove(serial_path);
  std::filesystem::remove(par_path);
}

TEST_CASE("manifest records config and library version", "[io]") {
  const auto path = std::filesystem::temp_directory_path() / "noisylr_manifest_test.json";
  nlohmann::json cfg;
  cfg["seed"] = 7;
  cfg["command"] = "are";
  write_manifest(path.string(), cfg);
  std::ifstream in(path);
  nlohmann::json j;
  in >> j;
  REQUIRE(j["seed"] == 7);
  REQUIRE(j["library"] == "noisylr");
  REQUIRE(j.contains("version"));
  std::filesystem::remove(path);
}
