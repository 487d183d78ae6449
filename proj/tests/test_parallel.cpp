#include <catch2/catch_amalgamated.hpp>

#include "noisylr/experiments.hpp"
#include "noisylr/parallel.hpp"
#include "oracles.hpp"

using namespace noisylr;

namespace {

struct Problem {
  DesignMatrix x;
  CountVector s;
  Vector w;
  double lambda;
};

Problem synthetic_problem(Index n, std::uint64_t seed, int m = 1) {
  SyntheticSpec spec{n, simulation_beta_star(), 0.75, seed};
  auto [x, y] = gen_synthetic(spec);
  Problem p;
  p.x = x;
  if (m == 1) {
    p.s = CountVector::from_labels(y);
  } else {
    p.s = generate_dataset_counts(x, spec.beta_star, NoiseModel::dirichlet_multinomial(m, 1.0),
                                  mix64(seed));
  }
  const auto pilot = fit_pilot(p.x, p.s);
  p.w = adaptive_weights(pilot.coef).w;
  p.lambda = 0.5 * std::pow(static_cast<double>(n), 0.25);
  return p;
}

double linf_rel(const Vector& a, const Vector& b) {
  return (a - b).lpNorm<Eigen::Infinity>() /
         std::max(1.0, a.lpNorm<Eigen::Infinity>());
}

}  // namespace

TEST_CASE("make_partition balanced and explicit", "[parallel]") {
  const auto p1 = make_partition(10, 1);
  REQUIRE(p1.workers() == 1);
  REQUIRE(p1.start(0) == 0);
  REQUIRE(p1.size(0) == 10);

  const auto p3 = make_partition(10, 3);
  REQUIRE(p3.size(0) == 4);
  REQUIRE(p3.size(1) == 3);
  REQUIRE(p3.size(2) == 3);

  const auto pe = make_partition(10, std::vector<Index>{2, 8});
  REQUIRE(pe.start(1) == 2);
  REQUIRE(pe.size(1) == 8);

  REQUIRE_THROWS_AS(make_partition(10, std::vector<Index>{2, 7}), std::invalid_argument);
  REQUIRE_THROWS_AS(make_partition(10, std::vector<Index>{0, 10}), std::invalid_argument);
  REQUIRE_THROWS_AS(make_partition(3, 4), std::invalid_argument);
}

TEST_CASE("worker_register eta on shards dominates the global bound", "[parallel]") {
  const auto prob = synthetic_problem(200, 21);
  const double mu = 1.0;
  const double global = oracle::lambda_max_dense(prob.x.to_dense(), mu);

  const auto single = worker_register(prob.x, mu);
  REQUIRE(single.value >= global);

  for (int g_count : {2, 4}) {
    const auto part = make_partition(200, g_count);
    double sum = 0.0;
    for (int g = 0; g < g_count; ++g)
      sum += worker_register(prob.x.rows_view(part.start(g), part.size(g)), mu).value;
    REQUIRE(sum >= global);
  }
}

TEST_CASE("central_beta_step is the shared soft-threshold step", "[parallel]") {
  Vector beta(3), xi(3), w(3);
  beta << 1.0, -0.5, 0.2;
  xi << 0.0, 0.0, 0.0;
  w << 1.0, 1.0, 1.0;
  REQUIRE(central_beta_step(beta, xi, 0.0, w, 2.0).isApprox(beta));

  xi << 0.2, -0.1, 0.0;
  const Vector got = central_beta_step(beta, xi, 0.4, w, 2.0);
  REQUIRE(got[0] == Catch::Approx(0.6));
  REQUIRE(got[1] == Catch::Approx(-0.2));
  REQUIRE(got[2] == 0.0);
}

TEST_CASE("one worker step equals the serial updates on its shard", "[parallel]") {
  const auto prob = synthetic_problem(60, 22, 3);
  AdmmConfig cfg;
  cfg.eta = estimate_eta(prob.x, cfg.mu).value;

  // Serial one iteration from zero state.
  AdmmState st = AdmmState::zeros(9, 60);
  const Vector beta1 = beta_update(st, prob.x, cfg, prob.lambda, prob.w);
  const Vector r1 = r_update(st, prob.x, prob.s, cfg, beta1);
  const Vector u1 = u_update(st, prob.x, cfg, beta1, r1);

  // Workers over a 3-way split.
  const auto part = make_partition(60, 3);
  for (int g = 0; g < 3; ++g) {
    ShardWorker wk(g, prob.x.rows_view(part.start(g), part.size(g)),
                   std::span<const int>(prob.s.counts.data() + part.start(g),
                                        static_cast<std::size_t>(part.size(g))),
                   prob.s.m);
    wk.reset(st.beta, st.r.segment(part.start(g), part.size(g)),
             st.u.segment(part.start(g), part.size(g)), cfg.mu, cfg.eta);
    wk.step(beta1, cfg.mu, cfg.c0, cfg.eta);
    REQUIRE((wk.r() - r1.segment(part.start(g), part.size(g))).lpNorm<Eigen::Infinity>() < 1e-12);
    REQUIRE((wk.u() - u1.segment(part.start(g), part.size(g))).lpNorm<Eigen::Infinity>() < 1e-12);
  }
}

TEST_CASE("xi aggregation reproduces the full linearized gradient", "[parallel]") {
  const auto prob = synthetic_problem(50, 23);
  AdmmConfig cfg;
  cfg.eta = estimate_eta(prob.x, cfg.mu).value;
  auto rng = derived_rng(23, 9);
  std::normal_distribution<double> normal;
  AdmmState st = AdmmState::zeros(9, 50);
  for (Index j = 0; j < 9; ++j) st.beta[j] = normal(rng);
  for (Index i = 0; i < 50; ++i) {
    st.r[i] = normal(rng);
    st.u[i] = normal(rng);
  }
  const Vector full_xi = (cfg.mu / cfg.eta) *
                         tmatvec(prob.x, matvec(prob.x, st.beta) - st.r - st.u / cfg.mu);
  const auto part = make_partition(50, 4);
  Vector sum = Vector::Zero(9);
  for (int g = 0; g < 4; ++g) {
    ShardWorker wk(g, prob.x.rows_view(part.start(g), part.size(g)),
                   std::span<const int>(prob.s.counts.data() + part.start(g),
                                        static_cast<std::size_t>(part.size(g))),
                   prob.s.m);
    wk.reset(st.beta, st.r.segment(part.start(g), part.size(g)),
             st.u.segment(part.start(g), part.size(g)), cfg.mu, cfg.eta);
    sum += wk.xi();
  }
  REQUIRE((sum - full_xi).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("solve_parallel with one worker equals serial", "[parallel]") {
  const auto prob = synthetic_problem(120, 24, 2);
  AdmmConfig cfg;
  cfg.max_iter = 400;
  const double eta = estimate_eta(prob.x, cfg.mu).value;
  cfg.eta = eta;
  const auto serial = solve(prob.x, prob.s, prob.lambda, prob.w, cfg);
  const auto par = solve_parallel(prob.x, prob.s, prob.lambda, prob.w, cfg,
                                  make_partition(120, 1), EtaMode::shared(eta));
  REQUIRE(par.trace.iterations == serial.trace.iterations);
  REQUIRE(linf_rel(serial.coef.values, par.coef.values) < 1e-12);
}

TEST_CASE("shared-eta parallel iterates match serial across worker counts", "[parallel][slow]") {
  const auto prob = synthetic_problem(400, 25, 5);
  AdmmConfig cfg;
  cfg.max_iter = 300;
  cfg.record_history = true;
  const double eta = estimate_eta(prob.x, cfg.mu).value;
  cfg.eta = eta;
  const auto serial = solve(prob.x, prob.s, prob.lambda, prob.w, cfg);

  for (int g_count : {2, 5, 10}) {
    const auto par = solve_parallel(prob.x, prob.s, prob.lambda, prob.w, cfg,
                                    make_partition(400, g_count), EtaMode::shared(eta));
    REQUIRE(par.trace.iterations == serial.trace.iterations);
    REQUIRE(par.trace.beta_history.size() == serial.trace.beta_history.size());
    for (std::size_t k = 0; k < par.trace.beta_history.size(); ++k) {
      REQUIRE(linf_rel(serial.trace.beta_history[k], par.trace.beta_history[k]) < 1e-8);
    }
    for (std::size_t k = 0; k < par.trace.primal_res.size(); ++k) {
      REQUIRE(par.trace.primal_res[k] ==
              Catch::Approx(serial.trace.primal_res[k]).epsilon(1e-8).margin(1e-12));
      REQUIRE(par.trace.dual_res[k] ==
              Catch::Approx(serial.trace.dual_res[k]).epsilon(1e-8).margin(1e-12));
      REQUIRE(par.trace.objective[k] ==
              Catch::Approx(serial.trace.objective[k]).epsilon(1e-8));
    }
    REQUIRE(par.coef.support == serial.coef.support);
  }
}

TEST_CASE("partition insensitivity under a shared eta", "[parallel][slow]") {
  const auto prob = synthetic_problem(300, 26, 1);
  AdmmConfig cfg;
  cfg.max_iter = 200;
  cfg.record_history = true;
  const double eta = estimate_eta(prob.x, cfg.mu).value;
  cfg.eta = eta;

  const auto a = solve_parallel(prob.x, prob.s, prob.lambda, prob.w, cfg,
                                make_partition(300, 3), EtaMode::shared(eta));
  const auto b = solve_parallel(prob.x, prob.s, prob.lambda, prob.w, cfg,
                                make_partition(300, std::vector<Index>{37, 120, 80, 63}),
                                EtaMode::shared(eta));
  REQUIRE(a.trace.beta_history.size() == b.trace.beta_history.size());
  const std::size_t upto = std::min<std::size_t>(200, a.trace.beta_history.size());
  for (std::size_t k = 0; k < upto; ++k)
    REQUIRE(linf_rel(a.trace.beta_history[k], b.trace.beta_history[k]) < 1e-8);
  REQUIRE(a.coef.support == b.coef.support);
}

TEST_CASE("sum-shards eta converges near the serial solution", "[parallel][slow]") {
  const auto prob = synthetic_problem(400, 27, 1);
  AdmmConfig cfg;
  cfg.eps_abs = 1e-6;
  cfg.eps_rel = 1e-5;
  cfg.max_iter = 60000;
  const double eta = estimate_eta(prob.x, cfg.mu).value;
  AdmmConfig serial_cfg = cfg;
  serial_cfg.eta = eta;
  const auto serial = solve(prob.x, prob.s, prob.lambda, prob.w, serial_cfg);
  REQUIRE(serial.trace.converged);

  for (int g_count : {2, 5}) {
    const auto par = solve_parallel(prob.x, prob.s, prob.lambda, prob.w, cfg,
                                    make_partition(400, g_count), EtaMode::sum_shards());
    REQUIRE(par.trace.converged);
    REQUIRE(par.trace.eta > eta);  // sum of shard bounds exceeds the global bound
    REQUIRE(par.coef.support == serial.coef.support);
    REQUIRE((par.coef.values - serial.coef.values).lpNorm<Eigen::Infinity>() < 1e-4);
  }
}

TEST_CASE("repeated runs are bitwise identical", "[parallel]") {
  const auto prob = synthetic_problem(90, 28, 2);
  AdmmConfig cfg;
  cfg.max_iter = 150;
  const auto part = make_partition(90, 4);
  const auto a = solve_parallel(prob.x, prob.s, prob.lambda, prob.w, cfg, part,
                                EtaMode::sum_shards());
  const auto b = solve_parallel(prob.x, prob.s, prob.lambda, prob.w, cfg, part,
                                EtaMode::sum_shards());
  REQUIRE(a.coef.values == b.coef.values);
  REQUIRE(a.trace.primal_res == b.trace.primal_res);
  REQUIRE(a.trace.dual_res == b.trace.dual_res);
  REQUIRE(a.trace.objective == b.trace.objective);
  REQUIRE(a.trace.h_step == b.trace.h_step);
}

TEST_CASE("solve_parallel validates inputs", "[parallel]") {
  const auto prob = synthetic_problem(30, 29);
  AdmmConfig cfg;
  REQUIRE_THROWS_AS(solve_parallel(prob.x, prob.s, prob.lambda, prob.w, cfg,
                                   make_partition(20, 2), EtaMode::sum_shards()),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(EtaMode::shared(0.0), std::invalid_argument);
}
