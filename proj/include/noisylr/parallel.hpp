#pragma once

#include <atomic>
#include <barrier>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <thread>
#include <vector>

#include "noisylr/solver.hpp"

namespace noisylr {

// Contiguous disjoint row ranges covering [0, n); every shard is non-empty.
struct Partition {
  std::vector<Index> offsets;  // size G+1, offsets[0] = 0, offsets[G] = n

  int workers() const { return static_cast<int>(offsets.size()) - 1; }
  Index start(int g) const { return offsets[static_cast<std::size_t>(g)]; }
  Index size(int g) const {
    return offsets[static_cast<std::size_t>(g) + 1] - offsets[static_cast<std::size_t>(g)];
  }
  Index total() const { return offsets.back(); }
};

// Balanced contiguous partition: the first n % G shards get one extra row.
inline Partition make_partition(Index n, int num_workers) {
  if (num_workers < 1) throw std::invalid_argument("make_partition: need at least one worker");
  if (n < num_workers)
    throw std::invalid_argument("make_partition: fewer rows than workers (empty shard)");
  const Index q = n / num_workers;
  const Index rem = n % num_workers;
  Partition p;
  p.offsets.resize(static_cast<std::size_t>(num_workers) + 1);
  p.offsets[0] = 0;
  for (int g = 0; g < num_workers; ++g)
    p.offsets[static_cast<std::size_t>(g) + 1] =
        p.offsets[static_cast<std::size_t>(g)] + q + (g < rem ? 1 : 0);
  return p;
}

inline Partition make_partition(Index n, const std::vector<Index>& sizes) {
  if (sizes.empty()) throw std::invalid_argument("make_partition: empty size list");
  Partition p;
  p.offsets.resize(sizes.size() + 1);
  p.offsets[0] = 0;
  for (std::size_t g = 0; g < sizes.size(); ++g) {
    if (sizes[g] < 1) throw std::invalid_argument("make_partition: shard sizes must be positive");
    p.offsets[g + 1] = p.offsets[g] + sizes[g];
  }
  if (p.offsets.back() != n)
    throw std::invalid_argument("make_partition: sizes do not sum to the row count");
  return p;
}

// Linearization-parameter policy for the parallel run. SumShards is what a
// real deployment computes (eta = sum_g eta_g); Shared pins one eta so the
// iterates reproduce the serial algorithm exactly.
struct EtaMode {
  enum class Kind { kShared, kSumShards };
  Kind kind = Kind::kSumShards;
  double eta = 0.0;

  static EtaMode shared(double eta) {
    if (eta <= 0.0) throw std::invalid_argument("EtaMode: shared eta must be positive");
    EtaMode m;
    m.kind = Kind::kShared;
    m.eta = eta;
    return m;
  }
  static EtaMode sum_shards() { return EtaMode{}; }
};

// eta_g for one shard, transmitted to the coordinator once before iteration 0.
inline SpectralEstimate worker_register(const DesignMatrix& shard, double mu, double tol = 1e-6,
                                        double safety = 1.01) {
  return estimate_eta(shard, mu, tol, safety);
}

// beta^{k+1} = soft(beta^k - sum_g xi_g, lambda w / eta); identical to the
// serial update when sum_g xi_g equals the full-data linearized gradient.
inline Vector central_beta_step(const Vector& beta, const Vector& xi_sum, double lambda,
                                const Vector& w, double eta) {
  if (eta <= 0.0) throw std::invalid_argument("central_beta_step: eta must be positive");
  return soft_threshold(beta - xi_sum, (lambda / eta) * w);
}

// Shard-local state and updates. Owns r_g, u_g and the cached X_g beta; the
// coordinator only ever sees xi_g and scalar/vector reductions.
class ShardWorker {
 public:
  struct StepStats {
    double primal_sq = 0.0;   // ||X_g beta - r_g||^2
    double x_beta_sq = 0.0;   // ||X_g beta||^2
    double r_sq = 0.0;        // ||r_g||^2
    double loss = 0.0;        // sum_i [-S_i t_i + phi(t_i)]
    double x_dbeta_sq = 0.0;  // ||X_g (beta - beta_prev)||^2
    double dr_sq = 0.0;
    double du_sq = 0.0;
    Vector dual_partial;  // X_g^T (r_g - r_g_prev)
    Vector xtu;           // X_g^T u_g
  };

  ShardWorker(int id, DesignMatrix shard, std::span<const int> counts, int m)
      : id_(id), x_(std::move(shard)), counts_(counts), m_(m) {
    if (static_cast<Index>(counts_.size()) != x_.rows())
      throw std::invalid_argument("ShardWorker: counts slice size mismatch");
  }

  int id() const { return id_; }
  Index rows() const { return x_.rows(); }
  const Vector& xi() const { return xi_; }
  const Vector& r() const { return r_; }
  const Vector& u() const { return u_; }
  double eta_g() const { return eta_g_; }

  double register_eta(double mu) {
    eta_g_ = worker_register(x_, mu).value;
    return eta_g_;
  }

  // Installs the shared initial state and computes xi_g^0.
  void reset(const Vector& beta0, const Vector& r0_slice, const Vector& u0_slice, double mu,
             double eta) {
    r_ = r0_slice;
    u_ = u0_slice;
    x_beta_ = matvec(x_, beta0);
    xi_ = (mu / eta) * tmatvec(x_, x_beta_ - r_ - u_ / mu);
  }

  // One local iteration after receiving beta^{k+1}: update r_g, u_g, then
  // recompute xi_g and the reduction terms the coordinator needs.
  StepStats step(const Vector& beta_new, double mu, double c0, double eta) {
    if (s_arr_.size() == 0)
      s_arr_ = Eigen::Map<const Eigen::ArrayXi>(counts_.data(), static_cast<Index>(counts_.size()))
                   .cast<double>();
    const double md = static_cast<double>(m_);
    const Vector x_beta_new = matvec(x_, beta_new);
    Vector r_new(r_.size());
    detail::r_update_into(r_, u_, s_arr_, md, mu, c0, x_beta_new, r_new);
    const double loss =
        (-s_arr_ * x_beta_new.array() + md * softplus_array(x_beta_new.array())).sum();
    const Vector u_new = u_ - mu * (x_beta_new - r_new);

    StepStats st;
    st.primal_sq = (x_beta_new - r_new).squaredNorm();
    st.x_beta_sq = x_beta_new.squaredNorm();
    st.r_sq = r_new.squaredNorm();
    st.loss = loss;
    st.x_dbeta_sq = (x_beta_new - x_beta_).squaredNorm();
    st.dr_sq = (r_new - r_).squaredNorm();
    st.du_sq = (u_new - u_).squaredNorm();
    st.dual_partial = tmatvec(x_, r_new - r_);
    st.xtu = tmatvec(x_, u_new);

    r_ = r_new;
    u_ = u_new;
    x_beta_ = x_beta_new;
    xi_ = (mu / eta) * tmatvec(x_, x_beta_ - r_ - u_ / mu);
    return st;
  }

 private:
  int id_;
  DesignMatrix x_;
  std::span<const int> counts_;
  int m_;
  Vector r_, u_, xi_, x_beta_;
  Eigen::ArrayXd s_arr_;
  double eta_g_ = 0.0;
};

// Partition-insensitive parallel ADMM. Workers run as threads in lockstep
// (broadcast beta -> local r/u/xi -> aggregate in ascending shard order), so
// repeated runs with the same partition are bitwise reproducible.
inline SolveResult solve_parallel(const DesignMatrix& x, const CountVector& counts, double lambda,
                                  const Vector& w, AdmmConfig config, const Partition& part,
                                  const EtaMode& eta_mode,
                                  std::optional<AdmmState> init = std::nullopt) {
  config.validate();
  counts.validate();
  const Index n = x.rows();
  const Index d = x.cols();
  if (part.total() != n) throw std::invalid_argument("solve_parallel: partition does not cover X");
  if (counts.size() != n) throw std::invalid_argument("solve_parallel: counts size mismatch");
  if (w.size() != d) throw std::invalid_argument("solve_parallel: weight size mismatch");
  if (lambda < 0.0) throw std::invalid_argument("solve_parallel: lambda must be >= 0");

  const int G = part.workers();
  const double mu = config.mu;

  std::vector<ShardWorker> workers;
  workers.reserve(static_cast<std::size_t>(G));
  for (int g = 0; g < G; ++g) {
    workers.emplace_back(g, x.rows_view(part.start(g), part.size(g)),
                         std::span<const int>(counts.counts.data() + part.start(g),
                                              static_cast<std::size_t>(part.size(g))),
                         counts.m);
  }

  // Registration: eta_g collected once, eta resolved and broadcast before
  // iteration 0.
  double eta = 0.0;
  if (eta_mode.kind == EtaMode::Kind::kShared) {
    eta = eta_mode.eta;
  } else {
    for (auto& wk : workers) eta += wk.register_eta(mu);
  }

  AdmmState s = init.value_or(AdmmState::zeros(d, n));
  if (s.beta.size() != d || s.r.size() != n || s.u.size() != n)
    throw std::invalid_argument("solve_parallel: init dimensions mismatch");
  for (int g = 0; g < G; ++g)
    workers[static_cast<std::size_t>(g)].reset(s.beta, s.r.segment(part.start(g), part.size(g)),
                                               s.u.segment(part.start(g), part.size(g)), mu, eta);

  SolveResult out;
  out.trace.eta = eta;
  out.trace.workers = G;

  Vector beta = s.beta;
  Vector beta_shared = beta;
  std::vector<ShardWorker::StepStats> stats(static_cast<std::size_t>(G));
  std::atomic<bool> quit{false};
  std::barrier sync(G + 1);

  std::vector<std::jthread> threads;
  threads.reserve(static_cast<std::size_t>(G));
  for (int g = 0; g < G; ++g) {
    threads.emplace_back([&, g] {
      auto& wk = workers[static_cast<std::size_t>(g)];
      while (true) {
        sync.arrive_and_wait();  // beta published (or quit)
        if (quit.load(std::memory_order_acquire)) break;
        stats[static_cast<std::size_t>(g)] = wk.step(beta_shared, mu, config.c0, eta);
        sync.arrive_and_wait();  // reductions ready
      }
    });
  }

  const double sqrt_n = std::sqrt(static_cast<double>(n));
  const double sqrt_d = std::sqrt(static_cast<double>(d));
  int iterations = 0;
  bool converged = false;

  try {
  for (int k = 0; k < config.max_iter; ++k) {
    Vector xi_sum = Vector::Zero(d);
    for (int g = 0; g < G; ++g) xi_sum += workers[static_cast<std::size_t>(g)].xi();
    const Vector beta_new = central_beta_step(beta, xi_sum, lambda, w, eta);

    beta_shared = beta_new;
    quit.store(false, std::memory_order_release);
    sync.arrive_and_wait();  // release workers on beta_new
    sync.arrive_and_wait();  // wait for shard updates

    double primal_sq = 0.0, x_beta_sq = 0.0, r_sq = 0.0, loss = 0.0;
    double x_dbeta_sq = 0.0, dr_sq = 0.0, du_sq = 0.0;
    Vector dual_vec = Vector::Zero(d);
    Vector xtu = Vector::Zero(d);
    for (int g = 0; g < G; ++g) {  // fixed ascending order
      const auto& st = stats[static_cast<std::size_t>(g)];
      primal_sq += st.primal_sq;
      x_beta_sq += st.x_beta_sq;
      r_sq += st.r_sq;
      loss += st.loss;
      x_dbeta_sq += st.x_dbeta_sq;
      dr_sq += st.dr_sq;
      du_sq += st.du_sq;
      dual_vec += st.dual_partial;
      xtu += st.xtu;
    }

    const double h = detail::h_step_from_parts(eta, mu, config.c0,
                                               (beta_new - beta).squaredNorm(), x_dbeta_sq, dr_sq,
                                               du_sq);
    const double primal = std::sqrt(primal_sq);
    const double dual = mu * dual_vec.norm();
    const double obj = loss + lambda * w.cwiseProduct(beta_new.cwiseAbs()).sum();

    out.trace.primal_res.push_back(primal);
    out.trace.dual_res.push_back(dual);
    out.trace.objective.push_back(obj);
    out.trace.h_step.push_back(h);
    if (config.record_history) out.trace.beta_history.push_back(beta_new);

    beta = beta_new;
    iterations = k + 1;

    const double eps_pri = sqrt_n * config.eps_abs +
                           config.eps_rel * std::max(std::sqrt(x_beta_sq), std::sqrt(r_sq));
    const double eps_dual = sqrt_d * config.eps_abs + config.eps_rel * xtu.norm();
    if ((primal <= eps_pri && dual <= eps_dual) || k == config.max_iter - 1) {
      converged = primal <= eps_pri && dual <= eps_dual;
      break;
    }
  }
  } catch (...) {
    quit.store(true, std::memory_order_release);
    sync.arrive_and_wait();  // workers are parked on the beta barrier
    throw;
  }

  quit.store(true, std::memory_order_release);
  sync.arrive_and_wait();  // release workers to observe quit
  threads.clear();         // join

  out.trace.iterations = iterations;
  out.trace.converged = converged;
  out.coef = Coefficients::from_values(beta);
  out.state.beta = beta;
  out.state.r.resize(n);
  out.state.u.resize(n);
  for (int g = 0; g < G; ++g) {
    out.state.r.segment(part.start(g), part.size(g)) = workers[static_cast<std::size_t>(g)].r();
    out.state.u.segment(part.start(g), part.size(g)) = workers[static_cast<std::size_t>(g)].u();
  }
  out.state.k = iterations;
  return out;
}

}  // namespace noisylr
