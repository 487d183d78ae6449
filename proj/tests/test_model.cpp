#include <catch2/catch_amalgamated.hpp>

#include "noisylr/experiments.hpp"
#include "noisylr/model.hpp"
#include "oracles.hpp"

using namespace noisylr;

TEST_CASE("phi family at zero and saturation", "[model]") {
  REQUIRE(phi(0.0, 1) == Catch::Approx(std::log(2.0)));
  REQUIRE(phi_prime(0.0, 1) == Catch::Approx(0.5));
  REQUIRE(phi_double_prime(0.0, 1) == Catch::Approx(0.25));

  REQUIRE(phi(800.0, 3) == Catch::Approx(2400.0));
  REQUIRE(phi_prime(800.0, 3) == Catch::Approx(3.0));
  REQUIRE(phi_double_prime(800.0, 3) == Catch::Approx(0.0).margin(1e-300));
  REQUIRE(std::isfinite(phi(-800.0, 3)));
}

TEST_CASE("phi derivatives match finite differences", "[model]") {
  auto rng = derived_rng(31, 1);
  std::uniform_real_distribution<double> unif(-6.0, 6.0);
  for (int k = 0; k < 100; ++k) {
    const double t = unif(rng);
    const int m = 1 + static_cast<int>(rng() % 9);
    auto f = [m](double v) { return phi(v, m); };
    auto f1 = [m](double v) { return phi_prime(v, m); };
    REQUIRE(phi_prime(t, m) == Catch::Approx(oracle::fd1(f, t)).epsilon(1e-6));
    REQUIRE(phi_double_prime(t, m) == Catch::Approx(oracle::fd1(f1, t, 1e-6)).epsilon(1e-6));
  }
}

TEST_CASE("counts_nll at zero coefficients", "[model]") {
  SyntheticSpec spec{40, simulation_beta_star(), 0.75, 3};
  auto x = gen_synthetic(spec).first;
  CountVector s;
  s.m = 3;
  s.counts.assign(40, 2);
  REQUIRE(counts_nll(x, s, Vector::Zero(9)) ==
          Catch::Approx(40.0 * 3.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("counts_nll degenerates to the logistic cross-entropy at m=1", "[model]") {
  SyntheticSpec spec{30, simulation_beta_star(), 0.75, 4};
  auto [x, y] = gen_synthetic(spec);
  const auto s = CountVector::from_labels(y);
  auto rng = derived_rng(32, 2);
  std::normal_distribution<double> normal;
  for (int k = 0; k < 5; ++k) {
    Vector beta(9);
    for (Index j = 0; j < 9; ++j) beta[j] = 0.3 * normal(rng);
    REQUIRE(counts_nll(x, s, beta) ==
            Catch::Approx(oracle::logistic_nll(x.to_dense(), y, beta)).epsilon(1e-10));
  }
}

TEST_CASE("counts_nll gradient identity against finite differences", "[model]") {
  SyntheticSpec spec{25, Vector::Ones(4), 0.3, 5};
  auto x = gen_synthetic(spec).first;
  CountVector s;
  s.m = 4;
  s.counts.assign(25, 0);
  auto rng = derived_rng(33, 3);
  for (auto& c : s.counts) c = static_cast<int>(rng() % 5);

  std::normal_distribution<double> normal;
  for (int k = 0; k < 10; ++k) {
    Vector beta(4);
    for (Index j = 0; j < 4; ++j) beta[j] = 0.5 * normal(rng);
    const Vector grad = counts_nll_gradient(x, s, beta);
    const Vector fd = oracle::fd_gradient(
        [&](const Vector& b) { return counts_nll(x, s, b); }, beta);
    REQUIRE((grad - fd).lpNorm<Eigen::Infinity>() <
            1e-6 * std::max(1.0, grad.lpNorm<Eigen::Infinity>()));
  }
}

TEST_CASE("counts_nll convexity probe", "[model]") {
  SyntheticSpec spec{30, Vector::Ones(5), 0.5, 6};
  auto x = gen_synthetic(spec).first;
  CountVector s;
  s.m = 2;
  s.counts.assign(30, 1);
  auto rng = derived_rng(34, 4);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    Vector b1(5), b2(5);
    for (Index j = 0; j < 5; ++j) {
      b1[j] = normal(rng);
      b2[j] = normal(rng);
    }
    const double t = unif(rng);
    const double lhs = counts_nll(x, s, (t * b1 + (1 - t) * b2).eval());
    const double rhs = t * counts_nll(x, s, b1) + (1 - t) * counts_nll(x, s, b2);
    REQUIRE(lhs <= rhs + 1e-9);
  }
}

TEST_CASE("penalized_objective reduces to counts_nll", "[model]") {
  SyntheticSpec spec{20, Vector::Ones(3), 0.0, 7};
  auto [x, y] = gen_synthetic(spec);
  const auto s = CountVector::from_labels(y);
  Vector beta(3);
  beta << 0.5, -0.2, 0.1;
  const Vector w = Vector::Ones(3);
  REQUIRE(penalized_objective(x, s, beta, 0.0, w) == Catch::Approx(counts_nll(x, s, beta)));
  REQUIRE(penalized_objective(x, s, Vector::Zero(3), 3.0, w) ==
          Catch::Approx(counts_nll(x, s, Vector::Zero(3))));
}

TEST_CASE("fit_pilot symmetric balanced design gives zero", "[model]") {
  DenseMatrix m(4, 1);
  m << 1, 1, -1, -1;
  auto x = DesignMatrix::dense(m);
  CountVector s;
  s.m = 1;
  s.counts = {1, 0, 1, 0};
  const auto fit = fit_pilot(x, s);
  REQUIRE(fit.coef.values[0] == Catch::Approx(0.0).margin(1e-8));
  REQUIRE_FALSE(fit.ridge_fallback);
}

TEST_CASE("fit_pilot is consistent on a synthetic draw", "[model]") {
  Vector beta_star(2);
  beta_star << 1.0, -1.0;
  SyntheticSpec spec{500, beta_star, 0.0, 8};
  auto [x, y] = gen_synthetic(spec);
  const auto fit = fit_pilot(x, CountVector::from_labels(y));
  REQUIRE((fit.coef.values - beta_star).norm() < 0.3);
}

TEST_CASE("fit_pilot stationarity on random instances", "[model]") {
  for (int k = 0; k < 20; ++k) {
    const Index n = 60 + 10 * k;
    Vector beta_star = Vector::Zero(3);
    beta_star << 0.8, -0.5, 0.2;
    SyntheticSpec spec{n, beta_star, 0.2, 100 + static_cast<std::uint64_t>(k)};
    auto [x, y] = gen_synthetic(spec);
    const auto s = CountVector::from_labels(y);
    const auto fit = fit_pilot(x, s);
    const double tol = 1e-8 * (1.0 + static_cast<double>(s.m) * static_cast<double>(n));
    REQUIRE(counts_nll_gradient(x, s, fit.coef.values).lpNorm<Eigen::Infinity>() <= tol);
  }
}

TEST_CASE("fit_pilot separation falls back to ridge", "[model]") {
  // Perfectly separated with tiny margins, so the unregularized optimum sits
  // beyond the 1e6 coefficient-norm guard.
  DenseMatrix m(6, 1);
  m << -3e-5, -2e-5, -1e-5, 1e-5, 2e-5, 3e-5;
  auto x = DesignMatrix::dense(m);
  CountVector s;
  s.m = 1;
  s.counts = {0, 0, 0, 1, 1, 1};
  const auto fit = fit_pilot(x, s);
  REQUIRE(fit.ridge_fallback);
  REQUIRE(std::isfinite(fit.coef.values[0]));
}

TEST_CASE("adaptive_weights formula and cap", "[model]") {
  Vector p1(2);
  p1 << 1.0, 1.0;
  auto aw = adaptive_weights(Coefficients::from_values(p1), 1.0, 1e8);
  REQUIRE(aw.w.isApprox(Vector::Ones(2)));

  Vector p2(2);
  p2 << 2.0, 0.5;
  auto aw2 = adaptive_weights(Coefficients::from_values(p2), 2.0, 1e8);
  REQUIRE(aw2.w[0] == Catch::Approx(0.25));
  REQUIRE(aw2.w[1] == Catch::Approx(4.0));

  Vector p3(2);
  p3 << 0.0, 3.0;
  auto aw3 = adaptive_weights(Coefficients::from_values(p3), 1.0, 1e8);
  REQUIRE(aw3.w[0] == 1e8);
}

TEST_CASE("adaptive weights are monotone in pilot magnitude", "[model]") {
  auto rng = derived_rng(35, 5);
  std::normal_distribution<double> normal;
  Vector pilot(8);
  for (Index j = 0; j < 8; ++j) pilot[j] = normal(rng);
  const auto aw = adaptive_weights(Coefficients::from_values(pilot), 1.3, 1e8);
  for (Index a = 0; a < 8; ++a)
    for (Index b = 0; b < 8; ++b)
      if (std::abs(pilot[a]) > std::abs(pilot[b])) REQUIRE(aw.w[a] <= aw.w[b]);
}

TEST_CASE("Coefficients support matches exact zeros", "[model]") {
  Vector v(4);
  v << 0.0, 1.5, 0.0, -2.0;
  const auto c = Coefficients::from_values(v);
  REQUIRE(c.support == std::vector<Index>{1, 3});
}
