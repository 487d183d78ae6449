// Command-line front end: dataset ingestion, label generation, fitting,
// tuning, and the experiment harnesses. Every run writes its artifacts plus a
// manifest.json with the full configuration and seeds into the output
// directory, so results can be re-executed bit-identically.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "noisylr/noisylr.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace noisylr;

namespace {

// JSON config support for CLI11: --config file.json provides defaults,
// explicit flags win.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool, bool, std::string) const override {
    json j;
    for (const CLI::Option* opt : app->get_options({})) {
      if (!opt->get_lnames().empty() && opt->get_configurable() && opt->count() > 0) {
        const auto& results = opt->results();
        if (results.size() == 1)
          j[opt->get_lnames()[0]] = results[0];
        else
          j[opt->get_lnames()[0]] = results;
      }
    }
    return j.dump(2);
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    input >> j;
    std::vector<CLI::ConfigItem> out;
    for (auto it = j.begin(); it != j.end(); ++it) {
      CLI::ConfigItem item;
      item.name = it.key();
      if (it.value().is_array()) {
        for (const auto& v : it.value())
          item.inputs.push_back(v.is_string() ? v.get<std::string>() : v.dump());
      } else if (it.value().is_string()) {
        item.inputs.push_back(it.value().get<std::string>());
      } else {
        item.inputs.push_back(it.value().dump());
      }
      out.push_back(std::move(item));
    }
    return out;
  }
};

struct CommonOpts {
  std::string out_dir;
  std::uint64_t seed = 7;
};

std::string default_out_dir() {
  if (const char* env = std::getenv("NOISYLR_OUT")) return env;
  return "noisylr_out";
}

void add_common(CLI::App* cmd, CommonOpts& c) {
  cmd->add_option("--out", c.out_dir, "output directory")->capture_default_str();
  cmd->add_option("--seed", c.seed, "master seed")->capture_default_str();
}

fs::path prepare_out(const CommonOpts& c, const std::string& sub) {
  fs::path dir = fs::path(c.out_dir) / sub;
  fs::create_directories(dir);
  return dir;
}

struct DataOpts {
  std::string path;
  Index dims = 0;
  Index n = 2000;
  double rho = 0.75;
  bool ar1 = false;
  bool intercept = false;
};

void add_data(CLI::App* cmd, DataOpts& d, bool synthetic_allowed = true) {
  auto* data = cmd->add_option("--data", d.path, "LIBSVM dataset path");
  cmd->add_option("--dims", d.dims, "feature-count override for LIBSVM input");
  cmd->add_flag("--intercept", d.intercept, "append an unpenalized constant column");
  if (synthetic_allowed) {
    cmd->add_option("--n", d.n, "synthetic sample count")->capture_default_str();
    cmd->add_option("--rho", d.rho, "synthetic pairwise correlation")->capture_default_str();
    cmd->add_flag("--ar1", d.ar1, "AR(1) correlation instead of equicorrelated");
  } else {
    data->required();
  }
}

// AR(1) variant of the synthetic design, kept CLI-side: the default
// equicorrelated generator lives in the library.
std::pair<DesignMatrix, std::vector<int>> gen_synthetic_ar1(const SyntheticSpec& spec) {
  spec.validate();
  const Index d = spec.beta_star.size();
  Eigen::LLT<DenseMatrix> chol;
  {
    DenseMatrix cov(d, d);
    for (Index a = 0; a < d; ++a)
      for (Index b = 0; b < d; ++b) cov(a, b) = std::pow(spec.rho, std::abs(a - b));
    chol.compute(cov);
  }
  const DenseMatrix l = chol.matrixL();
  DenseMatrix x(spec.n, d);
  std::vector<int> y(static_cast<std::size_t>(spec.n));
  for (Index i = 0; i < spec.n; ++i) {
    auto rng = derived_rng(spec.seed, rng_stream::kSynthetic, static_cast<std::uint64_t>(i));
    std::normal_distribution<double> normal;
    Vector z(d);
    for (Index j = 0; j < d; ++j) z[j] = normal(rng);
    x.row(i) = (l * z).transpose();
    std::bernoulli_distribution lab(sigmoid(x.row(i).dot(spec.beta_star)));
    y[static_cast<std::size_t>(i)] = lab(rng) ? 1 : 0;
  }
  return {DesignMatrix::dense(std::move(x)), std::move(y)};
}

struct LoadedData {
  DesignMatrix x;
  std::vector<int> y;
  json meta;
};

LoadedData load_data(const DataOpts& d, std::uint64_t seed) {
  LoadedData out;
  if (!d.path.empty()) {
    auto data = load_libsvm(d.path, d.dims);
    out.x = std::move(data.x);
    out.y = std::move(data.y);
    out.meta["dataset"] = d.path;
  } else {
    SyntheticSpec spec{d.n, simulation_beta_star(), d.rho, seed};
    auto data = d.ar1 ? gen_synthetic_ar1(spec) : gen_synthetic(spec);
    out.x = std::move(data.first);
    out.y = std::move(data.second);
    out.meta["dataset"] = "synthetic-5.1";
    out.meta["rho"] = d.rho;
    out.meta["correlation"] = d.ar1 ? "ar1" : "equicorrelated";
  }
  if (d.intercept) {
    out.x = out.x.with_constant_column();
    out.meta["intercept"] = true;
  }
  out.meta["n"] = out.x.rows();
  out.meta["d"] = out.x.cols();
  return out;
}

struct NoiseOpts {
  std::string kind = "truth";
  int m = 1;
  double alpha0 = 1.0;
};

void add_noise(CLI::App* cmd, NoiseOpts& n) {
  cmd->add_option("--noise", n.kind, "label model: truth | multinomial | dm")
      ->check(CLI::IsMember({"truth", "multinomial", "dm"}))
      ->capture_default_str();
  cmd->add_option("--m", n.m, "experts per item")->capture_default_str();
  cmd->add_option("--alpha0", n.alpha0, "overdispersion parameter")->capture_default_str();
}

NoiseModel make_model(const NoiseOpts& n) {
  if (n.kind == "truth") return NoiseModel::truth(n.m);
  if (n.kind == "multinomial") return NoiseModel::multinomial(n.m);
  return NoiseModel::dirichlet_multinomial(n.m, n.alpha0);
}

struct SolverOpts {
  double mu = 1.0;
  double c0 = 1e-2;
  double eps_abs = 1e-6;
  double eps_rel = 1e-5;
  int max_iter = 5000;
  double gamma = 1.0;
  double cap = 1e8;
  double lambda = -1.0;  // < 0: tune by HBIC
  int grid = 30;
  int workers = 1;
  std::string eta_mode = "sumshards";
  double eta_shared = 0.0;
};

void add_solver(CLI::App* cmd, SolverOpts& s) {
  cmd->add_option("--mu", s.mu)->capture_default_str();
  cmd->add_option("--c0", s.c0)->capture_default_str();
  cmd->add_option("--eps-abs", s.eps_abs)->capture_default_str();
  cmd->add_option("--eps-rel", s.eps_rel)->capture_default_str();
  cmd->add_option("--max-iter", s.max_iter)->capture_default_str();
  cmd->add_option("--gamma", s.gamma, "adaptive-weight exponent")->capture_default_str();
  cmd->add_option("--weight-cap", s.cap)->capture_default_str();
  cmd->add_option("--lambda", s.lambda, "fixed lambda (otherwise HBIC-tuned)");
  cmd->add_option("--grid", s.grid, "lambda grid size")->capture_default_str();
  cmd->add_option("--G", s.workers, "worker count")->capture_default_str();
  cmd->add_option("--eta", s.eta_mode, "eta mode: sumshards | shared")
      ->check(CLI::IsMember({"sumshards", "shared"}))
      ->capture_default_str();
  cmd->add_option("--eta-value", s.eta_shared, "explicit shared eta (0 = estimate)");
}

AdmmConfig admm_config(const SolverOpts& s) {
  AdmmConfig cfg;
  cfg.mu = s.mu;
  cfg.c0 = s.c0;
  cfg.eps_abs = s.eps_abs;
  cfg.eps_rel = s.eps_rel;
  cfg.max_iter = s.max_iter;
  return cfg;
}

json solver_json(const SolverOpts& s) {
  return json{{"mu", s.mu},       {"c0", s.c0},           {"eps_abs", s.eps_abs},
              {"eps_rel", s.eps_rel}, {"max_iter", s.max_iter}, {"gamma", s.gamma},
              {"weight_cap", s.cap},  {"lambda", s.lambda},     {"grid", s.grid},
              {"G", s.workers},       {"eta_mode", s.eta_mode}};
}

int run_fit(const CommonOpts& common, const DataOpts& data_opts, const NoiseOpts& noise,
            const SolverOpts& solver_opts) {
  const auto dir = prepare_out(common, "fit");
  auto data = load_data(data_opts, common.seed);

  CountVector counts;
  if (noise.kind == "truth" && noise.m == 1) {
    counts = CountVector::from_labels(data.y);
  } else {
    // Application 1: pilot on the observed labels drives the posteriors that
    // generate multi-expert counts.
    const auto pilot_y = fit_pilot(data.x, CountVector::from_labels(data.y));
    counts = generate_dataset_counts(data.x, pilot_y.coef.values, make_model(noise),
                                     mix64(common.seed ^ 0xC0FFEE), &data.y);
  }

  const PilotFit pilot = fit_pilot(data.x, counts);
  AdaptiveWeights aw = adaptive_weights(pilot.coef, solver_opts.gamma, solver_opts.cap);
  if (data_opts.intercept) aw.w[aw.w.size() - 1] = 0.0;  // constant column unpenalized

  AdmmConfig cfg = admm_config(solver_opts);
  double lambda = solver_opts.lambda;
  json tuning_meta;
  if (lambda < 0.0) {
    PathOptions popt;
    popt.grid_size = solver_opts.grid;
    AdmmConfig path_cfg = cfg;
    path_cfg.eps_abs = std::max(cfg.eps_abs, 1e-4);
    path_cfg.eps_rel = std::max(cfg.eps_rel, 1e-2);
    path_cfg.max_iter = std::min(cfg.max_iter, 800);
    const auto path = lambda_path(data.x, counts, aw.w, path_cfg, popt);
    lambda = path.chosen_lambda;
    write_tuning_csv((dir / "path.csv").string(), path);
    tuning_meta["chosen_lambda"] = lambda;
    tuning_meta["path_csv"] = "path.csv";
  }

  SolveResult res;
  if (solver_opts.workers > 1) {
    const auto part = make_partition(data.x.rows(), solver_opts.workers);
    EtaMode mode = EtaMode::sum_shards();
    if (solver_opts.eta_mode == "shared") {
      const double eta = solver_opts.eta_shared > 0.0
                             ? solver_opts.eta_shared
                             : estimate_eta(data.x, cfg.mu).value;
      mode = EtaMode::shared(eta);
    }
    res = solve_parallel(data.x, counts, lambda, aw.w, cfg, part, mode);
  } else {
    res = solve(data.x, counts, lambda, aw.w, cfg);
  }

  write_coefficients_json((dir / "coefficients.json").string(), res.coef, solver_opts.gamma,
                          lambda);
  write_trace_csv((dir / "trace.csv").string(), res.trace);
  {
    std::ofstream cf(dir / "counts.txt");
    write_counts(cf, counts);
  }

  json manifest;
  manifest["command"] = "fit";
  manifest["seed"] = common.seed;
  manifest["data"] = data.meta;
  manifest["noise"] = {{"kind", noise.kind}, {"m", noise.m}, {"alpha0", noise.alpha0}};
  manifest["solver"] = solver_json(solver_opts);
  manifest["tuning"] = tuning_meta;
  manifest["lambda"] = lambda;
  manifest["pilot_ridge_fallback"] = pilot.ridge_fallback;
  manifest["converged"] = res.trace.converged;
  manifest["iterations"] = res.trace.iterations;
  manifest["eta"] = res.trace.eta;
  write_manifest((dir / "manifest.json").string(), manifest);

  std::cout << "fit: " << res.coef.support_size() << " active coefficients, "
            << res.trace.iterations << " iterations, lambda = " << lambda << "\n"
            << "artifacts in " << dir << "\n";
  return res.trace.converged ? 0 : 1;
}

int run_labels(const CommonOpts& common, const DataOpts& data_opts, const NoiseOpts& noise,
               const std::string& beta_path, const std::string& missing_mask) {
  const auto dir = prepare_out(common, "labels");
  auto data = load_data(data_opts, common.seed);

  Vector beta_ref;
  if (!beta_path.empty()) {
    beta_ref = read_coefficients_json(beta_path).values;
  } else {
    beta_ref = fit_pilot(data.x, CountVector::from_labels(data.y)).coef.values;
  }

  const auto model = make_model(noise);
  CountVector counts;
  if (missing_mask.empty()) {
    counts = generate_dataset_counts(data.x, beta_ref, model, mix64(common.seed), &data.y);
  } else {
    // Application 2: observed rows become unanimous m*y votes, masked rows
    // get imputed counts from the reference coefficients.
    std::ifstream mf(missing_mask);
    if (!mf) throw std::runtime_error("cannot open " + missing_mask);
    std::vector<int> mask;
    int v;
    while (mf >> v) mask.push_back(v);
    if (static_cast<Index>(mask.size()) != data.x.rows())
      throw std::runtime_error("missing mask length mismatch");

    std::vector<Index> missing_rows;
    for (Index i = 0; i < data.x.rows(); ++i)
      if (mask[static_cast<std::size_t>(i)] != 0) missing_rows.push_back(i);
    const auto imputed =
        impute_missing(data.x.select_rows(missing_rows), beta_ref, model, mix64(common.seed));

    counts.m = model.m;
    counts.counts.resize(static_cast<std::size_t>(data.x.rows()));
    counts.imputed.assign(static_cast<std::size_t>(data.x.rows()), 0);
    std::size_t next = 0;
    for (Index i = 0; i < data.x.rows(); ++i) {
      if (mask[static_cast<std::size_t>(i)] != 0) {
        counts.counts[static_cast<std::size_t>(i)] = imputed.counts[next++];
        counts.imputed[static_cast<std::size_t>(i)] = 1;
      } else {
        counts.counts[static_cast<std::size_t>(i)] =
            model.m * data.y[static_cast<std::size_t>(i)];
      }
    }
  }

  {
    std::ofstream cf(dir / "counts.txt");
    write_counts(cf, counts);
  }
  if (!counts.imputed.empty()) {
    std::ofstream mf(dir / "imputed_mask.txt");
    for (auto flag : counts.imputed) mf << static_cast<int>(flag) << '\n';
  }

  json manifest;
  manifest["command"] = "labels";
  manifest["seed"] = common.seed;
  manifest["data"] = data.meta;
  manifest["noise"] = {{"kind", noise.kind}, {"m", noise.m}, {"alpha0", noise.alpha0}};
  manifest["beta_source"] = beta_path.empty() ? "pilot" : beta_path;
  manifest["missing_mask"] = missing_mask;
  write_manifest((dir / "manifest.json").string(), manifest);
  std::cout << "labels: wrote " << counts.size() << " rows to " << dir << "\n";
  return 0;
}

int run_tune(const CommonOpts& common, const DataOpts& data_opts, const NoiseOpts& noise,
             const SolverOpts& solver_opts) {
  const auto dir = prepare_out(common, "tune");
  auto data = load_data(data_opts, common.seed);

  CountVector counts;
  if (noise.kind == "truth" && noise.m == 1) {
    counts = CountVector::from_labels(data.y);
  } else {
    const auto pilot_y = fit_pilot(data.x, CountVector::from_labels(data.y));
    counts = generate_dataset_counts(data.x, pilot_y.coef.values, make_model(noise),
                                     mix64(common.seed ^ 0xC0FFEE), &data.y);
  }

  const PilotFit pilot = fit_pilot(data.x, counts);
  AdaptiveWeights aw = adaptive_weights(pilot.coef, solver_opts.gamma, solver_opts.cap);
  if (data_opts.intercept) aw.w[aw.w.size() - 1] = 0.0;

  PathOptions popt;
  popt.grid_size = solver_opts.grid;
  const auto path = lambda_path(data.x, counts, aw.w, admm_config(solver_opts), popt);

  write_tuning_csv((dir / "path.csv").string(), path);
  write_coefficients_json((dir / "coefficients.json").string(), path.chosen(),
                          solver_opts.gamma, path.chosen_lambda);

  json manifest;
  manifest["command"] = "tune";
  manifest["seed"] = common.seed;
  manifest["data"] = data.meta;
  manifest["solver"] = solver_json(solver_opts);
  manifest["chosen_lambda"] = path.chosen_lambda;
  manifest["chosen_support"] = path.chosen().support;
  manifest["total_iterations"] = path.total_iterations;
  write_manifest((dir / "manifest.json").string(), manifest);
  std::cout << "tune: chose lambda = " << path.chosen_lambda << " with "
            << path.chosen().support_size() << " active coefficients\n"
            << "artifacts in " << dir << "\n";
  return 0;
}

AreFitRule parse_fit_rule(const std::string& s) {
  if (s == "mle") return AreFitRule::kPilotMle;
  if (s == "rate") return AreFitRule::kRateLambda;
  return AreFitRule::kHbicPath;
}

int run_are(const CommonOpts& common, Index n, double rho, int m, double alpha0, int reps,
            Index n_eval, const std::string& fit_rule, int redraws) {
  const auto dir = prepare_out(common, "are");
  SyntheticSpec spec{n, simulation_beta_star(), rho, common.seed};
  const auto est = simulate_are(spec, m, alpha0, reps, FitOptions{}, n_eval,
                                parse_fit_rule(fit_rule), redraws);

  std::vector<AreTableRow> rows{{m, alpha0, n, est.theoretical, est.simulated, est.se, reps,
                                 est.denominator_warning}};
  write_are_table_csv((dir / "are.csv").string(), rows);

  json manifest;
  manifest["command"] = "are";
  manifest["seed"] = common.seed;
  manifest["n"] = n;
  manifest["rho"] = rho;
  manifest["correlation"] = "equicorrelated";
  manifest["m"] = m;
  manifest["alpha0"] = alpha0;
  manifest["reps"] = reps;
  manifest["n_eval"] = n_eval;
  manifest["fit_rule"] = fit_rule;
  manifest["label_redraws"] = redraws;
  manifest["error_rule"] = "thresholded";
  manifest["simulated"] = est.simulated;
  manifest["theoretical"] = est.theoretical;
  manifest["se"] = est.se;
  write_manifest((dir / "manifest.json").string(), manifest);

  std::cout << "ARE(m=" << m << ", alpha0=" << alpha0 << ", n=" << n << "): simulated "
            << est.simulated << " (se " << est.se << "), theoretical " << est.theoretical
            << "\nartifacts in " << dir << "\n";
  if (est.denominator_warning)
    std::cerr << "warning: non-positive excess-error denominator; estimate unreliable\n";
  return 0;
}

int run_table1(const CommonOpts& common, const std::vector<int>& m_list,
               const std::vector<double>& a0_list, const std::vector<Index>& n_list, int reps,
               Index n_eval, const std::string& fit_rule, int redraws, bool plot) {
  const auto dir = prepare_out(common, "table1");
  FitOptions opt;
  std::vector<AreTableRow> rows;
  std::uint64_t cell = 0;
  for (int m : m_list)
    for (double a0 : a0_list)
      for (Index n : n_list) {
        SyntheticSpec spec{n, simulation_beta_star(), 0.75, mix64(common.seed ^ ++cell)};
        const auto est = simulate_are(spec, m, a0, reps, opt, n_eval,
                                      parse_fit_rule(fit_rule), redraws);
        rows.push_back({m, a0, n, est.theoretical, est.simulated, est.se, reps,
                        est.denominator_warning});
        std::cout << "m=" << m << " alpha0=" << a0 << " n=" << n << ": " << est.simulated
                  << " (" << est.se << ") vs " << est.theoretical << "\n";
      }
  write_are_table_csv((dir / "table1.csv").string(), rows);
  if (plot) write_are_gnuplot((dir / "table1.gp").string(), "table1.csv");

  json manifest;
  manifest["command"] = "table1";
  manifest["seed"] = common.seed;
  manifest["m_list"] = m_list;
  manifest["alpha0_list"] = a0_list;
  manifest["n_list"] = n_list;
  manifest["reps"] = reps;
  manifest["n_eval"] = n_eval;
  manifest["fit_rule"] = fit_rule;
  manifest["label_redraws"] = redraws;
  manifest["error_rule"] = "thresholded";
  manifest["correlation"] = "equicorrelated";
  write_manifest((dir / "manifest.json").string(), manifest);
  std::cout << "artifacts in " << dir << "\n";
  return 0;
}

int run_bench(const CommonOpts& common, Index n, const std::vector<int>& g_list, int reps,
              const std::string& eta_mode) {
  const auto dir = prepare_out(common, "bench-parallel");
  FitOptions opt;
  const bool shared = eta_mode == "shared";
  const auto bench = run_parallel_bench(n, g_list, reps, shared, simulation_beta_star(), 0.75,
                                        common.seed, opt);
  write_bench_csv((dir / "bench.csv").string(), bench);

  json manifest;
  manifest["command"] = "bench-parallel";
  manifest["seed"] = common.seed;
  manifest["n"] = n;
  manifest["G_list"] = g_list;
  manifest["reps"] = reps;
  manifest["eta_mode"] = eta_mode;
  manifest["hardware_threads"] = std::thread::hardware_concurrency();
  manifest["invariant_across_G"] = bench.invariant_across_g;
  write_manifest((dir / "manifest.json").string(), manifest);

  for (const auto& row : bench.rows) {
    std::cout << "G=" << row.workers << ": FP " << row.report.fp << ", FN " << row.report.fn
              << ", AE " << row.report.ae << " (" << row.report.ae_se << "), Ite "
              << row.report.ite << ", time " << row.report.wall_time << "s\n";
  }
  if (shared && !bench.invariant_across_g) {
    std::cerr << "error: quality columns varied across G under a shared eta\n";
    return 1;
  }
  std::cout << "artifacts in " << dir << "\n";
  return 0;
}

// Real-data ARE grid (w8a-style): beta* is estimated on the full dataset by
// the ALASSO pipeline, counts are drawn from its posteriors on the training
// split, and excess errors are evaluated on the held-out split.
int run_table4(const CommonOpts& common, const DataOpts& data_opts, Index n_train,
               const std::vector<int>& m_list, const std::vector<double>& a0_list, int reps,
               const std::string& fit_rule) {
  const auto dir = prepare_out(common, "table4");
  auto data = load_data(data_opts, common.seed);
  LibsvmData full{data.x, data.y};

  FitOptions opt;
  const auto star_fit = fit_alasso(full.x, CountVector::from_labels(full.y), opt);
  const Vector beta_star = star_fit.coef.values;

  const auto rule = parse_fit_rule(fit_rule);
  std::vector<AreTableRow> rows;
  std::cout << "beta* support " << star_fit.coef.support_size() << ", lambda "
            << star_fit.lambda << "\n";

  for (int m : m_list)
    for (double a0 : a0_list) {
      std::vector<double> num(static_cast<std::size_t>(reps)),
          den(static_cast<std::size_t>(reps));
      for (int rep = 0; rep < reps; ++rep) {
        const auto split =
            split_train_test(full, n_train, mix64(common.seed ^ static_cast<std::uint64_t>(rep)));
        const Vector p_star =
            sigmoid_array(matvec(split.train.x, beta_star).array()).matrix();
        const Index nt = split.train.x.rows();
        CountVector s_truth, s_noisy;
        s_truth.m = 1;
        s_truth.counts.resize(static_cast<std::size_t>(nt));
        s_noisy.m = m;
        s_noisy.counts.resize(static_cast<std::size_t>(nt));
        const std::uint64_t ls =
            mix64(common.seed ^ mix64(static_cast<std::uint64_t>(rep) ^ 0x7461346Cull));
        for (Index i = 0; i < nt; ++i) {
          auto rng = derived_rng(ls, rng_stream::kRows, static_cast<std::uint64_t>(i));
          const double p = p_star[i];
          std::uniform_real_distribution<double> unif(0.0, 1.0);
          const double u = unif(rng);
          s_truth.counts[static_cast<std::size_t>(i)] = u <= p ? 1 : 0;
          double q = p;
          if (p > 0.0 && p < 1.0) q = draw_beta(a0 * p, a0 * (1.0 - p), rng);
          s_noisy.counts[static_cast<std::size_t>(i)] =
              (u <= q ? 1 : 0) + (m > 1 ? draw_binomial(m - 1, q, rng) : 0);
        }
        const auto bh = detail::are_fit(split.train.x, s_truth, opt, rule);
        const auto bt = detail::are_fit(split.train.x, s_noisy, opt, rule);
        const double err_star =
            conditional_error_threshold(beta_star, beta_star, split.test.x);
        num[static_cast<std::size_t>(rep)] =
            conditional_error_threshold(bh.values, beta_star, split.test.x) - err_star;
        den[static_cast<std::size_t>(rep)] =
            conditional_error_threshold(bt.values, beta_star, split.test.x) - err_star;
      }
      double nm = 0, dm = 0;
      for (int rep = 0; rep < reps; ++rep) {
        nm += num[static_cast<std::size_t>(rep)];
        dm += den[static_cast<std::size_t>(rep)];
      }
      nm /= reps;
      dm /= reps;
      AreTableRow row;
      row.m = m;
      row.alpha0 = a0;
      row.n = n_train;
      row.theoretical = theoretical_are(m, a0);
      row.simulated = dm > 0.0 ? nm / dm : std::numeric_limits<double>::quiet_NaN();
      row.se = 0.0;
      row.reps = reps;
      row.warning = dm <= 0.0;
      rows.push_back(row);
      std::cout << "m=" << m << " alpha0=" << a0 << ": simulated " << row.simulated
                << " (theory " << row.theoretical << ")\n";
    }

  write_are_table_csv((dir / "table4.csv").string(), rows);
  json manifest;
  manifest["command"] = "table4";
  manifest["seed"] = common.seed;
  manifest["data"] = data.meta;
  manifest["n_train"] = n_train;
  manifest["m_list"] = m_list;
  manifest["alpha0_list"] = a0_list;
  manifest["reps"] = reps;
  manifest["fit_rule"] = fit_rule;
  manifest["error_rule"] = "thresholded";
  manifest["beta_star_lambda"] = star_fit.lambda;
  manifest["beta_star_support"] = star_fit.coef.support;
  write_manifest((dir / "manifest.json").string(), manifest);
  std::cout << "artifacts in " << dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adaptive-lasso penalized logistic regression with multi-expert noisy labels"};
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON config file (flags override it)");
  app.require_subcommand(1);

  CommonOpts common;
  common.out_dir = default_out_dir();

  // fit
  auto* fit = app.add_subcommand("fit", "fit the penalized model on a dataset");
  CommonOpts fit_common = common;
  DataOpts fit_data;
  NoiseOpts fit_noise;
  SolverOpts fit_solver;
  add_common(fit, fit_common);
  add_data(fit, fit_data);
  add_noise(fit, fit_noise);
  add_solver(fit, fit_solver);

  // labels
  auto* labels = app.add_subcommand("labels", "generate or impute expert vote counts");
  CommonOpts lab_common = common;
  DataOpts lab_data;
  NoiseOpts lab_noise;
  std::string lab_beta, lab_mask;
  add_common(labels, lab_common);
  add_data(labels, lab_data);
  add_noise(labels, lab_noise);
  labels->add_option("--beta", lab_beta, "coefficients JSON driving the posteriors");
  labels->add_option("--missing-mask", lab_mask, "0/1 file marking rows to impute");

  // tune
  auto* tune = app.add_subcommand("tune", "lambda path with HBIC selection");
  CommonOpts tune_common = common;
  DataOpts tune_data;
  NoiseOpts tune_noise;
  SolverOpts tune_solver;
  tune_solver.eps_abs = 1e-4;
  tune_solver.eps_rel = 1e-2;
  tune_solver.max_iter = 800;
  add_common(tune, tune_common);
  add_data(tune, tune_data);
  add_noise(tune, tune_noise);
  add_solver(tune, tune_solver);

  // are
  auto* are = app.add_subcommand("are", "simulated asymptotic relative efficiency");
  CommonOpts are_common = common;
  Index are_n = 2000, are_eval = 100000;
  double are_rho = 0.75, are_a0 = 1.0;
  int are_m = 5, are_reps = 100, are_redraws = 3;
  std::string are_rule = "mle";
  add_common(are, are_common);
  are->add_option("--n", are_n)->capture_default_str();
  are->add_option("--rho", are_rho)->capture_default_str();
  are->add_option("--m", are_m)->capture_default_str();
  are->add_option("--alpha0", are_a0)->capture_default_str();
  are->add_option("--reps", are_reps)->capture_default_str();
  are->add_option("--n-eval", are_eval)->capture_default_str();
  are->add_option("--fit-rule", are_rule, "mle | rate | hbic")
      ->check(CLI::IsMember({"mle", "rate", "hbic"}))
      ->capture_default_str();
  are->add_option("--redraws", are_redraws, "label redraws per design draw")
      ->capture_default_str();

  // table1
  auto* table1 = app.add_subcommand("table1", "ARE grid over (m, alpha0, n)");
  CommonOpts t1_common = common;
  std::vector<int> t1_m = {5, 10, 50};
  std::vector<double> t1_a0 = {1.0, 10.0, 100.0, 1000.0};
  std::vector<Index> t1_n = {100, 200, 500, 1000, 2000};
  int t1_reps = 100, t1_redraws = 3;
  Index t1_eval = 100000;
  std::string t1_rule = "mle";
  bool t1_plot = false;
  add_common(table1, t1_common);
  table1->add_option("--m-list", t1_m)->delimiter(',')->capture_default_str();
  table1->add_option("--alpha0-list", t1_a0)->delimiter(',')->capture_default_str();
  table1->add_option("--n-list", t1_n)->delimiter(',')->capture_default_str();
  table1->add_option("--reps", t1_reps)->capture_default_str();
  table1->add_option("--n-eval", t1_eval)->capture_default_str();
  table1->add_option("--fit-rule", t1_rule)->check(CLI::IsMember({"mle", "rate", "hbic"}));
  table1->add_option("--redraws", t1_redraws)->capture_default_str();
  table1->add_flag("--plot", t1_plot, "emit a gnuplot script next to the CSV");

  // bench-parallel
  auto* bench = app.add_subcommand("bench-parallel", "worker-count comparison harness");
  CommonOpts bench_common = common;
  Index bench_n = 100000;
  std::vector<int> bench_g = {1, 5, 10};
  int bench_reps = 3;
  std::string bench_eta = "shared";
  add_common(bench, bench_common);
  bench->add_option("--n", bench_n)->capture_default_str();
  bench->add_option("--G", bench_g)->delimiter(',')->capture_default_str();
  bench->add_option("--reps", bench_reps)->capture_default_str();
  bench->add_option("--eta", bench_eta)->check(CLI::IsMember({"shared", "sumshards"}))
      ->capture_default_str();

  // table4
  auto* table4 = app.add_subcommand("table4", "real-data ARE grid");
  CommonOpts t4_common = common;
  DataOpts t4_data;
  Index t4_train = 40000;
  std::vector<int> t4_m = {5, 10};
  std::vector<double> t4_a0 = {1.0, 10.0};
  int t4_reps = 3;
  std::string t4_rule = "mle";
  add_common(table4, t4_common);
  add_data(table4, t4_data, /*synthetic_allowed=*/false);
  table4->add_option("--n-train", t4_train)->capture_default_str();
  table4->add_option("--m-list", t4_m)->delimiter(',')->capture_default_str();
  table4->add_option("--alpha0-list", t4_a0)->delimiter(',')->capture_default_str();
  table4->add_option("--reps", t4_reps)->capture_default_str();
  table4->add_option("--fit-rule", t4_rule)->check(CLI::IsMember({"mle", "rate", "hbic"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 2;
  }

  try {
    if (*fit) return run_fit(fit_common, fit_data, fit_noise, fit_solver);
    if (*labels) return run_labels(lab_common, lab_data, lab_noise, lab_beta, lab_mask);
    if (*tune) return run_tune(tune_common, tune_data, tune_noise, tune_solver);
    if (*are)
      return run_are(are_common, are_n, are_rho, are_m, are_a0, are_reps, are_eval, are_rule,
                     are_redraws);
    if (*table1)
      return run_table1(t1_common, t1_m, t1_a0, t1_n, t1_reps, t1_eval, t1_rule, t1_redraws,
                        t1_plot);
    if (*bench) return run_bench(bench_common, bench_n, bench_g, bench_reps, bench_eta);
    if (*table4)
      return run_table4(t4_common, t4_data, t4_train, t4_m, t4_a0, t4_reps, t4_rule);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
