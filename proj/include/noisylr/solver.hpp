#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "noisylr/linalg.hpp"
#include "noisylr/model.hpp"

namespace noisylr {

struct AdmmConfig {
  double mu = 1.0;       // augmentation parameter
  double c0 = 1e-2;      // r-surrogate constant
  double eta = 0.0;      // beta linearization; <= 0 requests a power-iteration estimate
  double eps_abs = 1e-6;
  double eps_rel = 1e-5;
  int max_iter = 5000;
  bool record_history = false;  // keep per-iteration beta snapshots
  bool record_trace = true;     // per-iteration diagnostics (objective, h_step, ...)

  void validate() const {
    if (mu <= 0.0) throw std::invalid_argument("AdmmConfig: mu must be positive");
    if (c0 <= 0.0) throw std::invalid_argument("AdmmConfig: c0 must be positive");
    if (eps_abs <= 0.0 || eps_rel <= 0.0)
      throw std::invalid_argument("AdmmConfig: tolerances must be positive");
    if (max_iter < 1) throw std::invalid_argument("AdmmConfig: max_iter must be >= 1");
  }
};

struct AdmmState {
  Vector beta;
  Vector r;
  Vector u;
  int k = 0;

  static AdmmState zeros(Index d, Index n) {
    AdmmState s;
    s.beta = Vector::Zero(d);
    s.r = Vector::Zero(n);
    s.u = Vector::Zero(n);
    return s;
  }
};

struct IterationTrace {
  std::vector<double> primal_res;
  std::vector<double> dual_res;
  std::vector<double> objective;
  std::vector<double> h_step;
  std::vector<Vector> beta_history;  // filled when AdmmConfig::record_history
  double eta = 0.0;                  // resolved linearization parameter
  int iterations = 0;
  int workers = 0;  // 0 = serial run
  bool converged = false;
};

struct SolveResult {
  Coefficients coef;
  AdmmState state;  // final iterate, reusable as a warm start
  IterationTrace trace;
};

// out_j = sign(z_j) * max(|z_j| - tau_j, 0); produces exact zeros.
inline Vector soft_threshold(const Vector& z, const Vector& tau) {
  if (z.size() != tau.size()) throw std::invalid_argument("soft_threshold: size mismatch");
  Vector out(z.size());
  for (Index j = 0; j < z.size(); ++j) {
    if (tau[j] < 0.0) throw std::invalid_argument("soft_threshold: negative threshold");
    const double a = std::abs(z[j]) - tau[j];
    out[j] = a > 0.0 ? (z[j] > 0.0 ? a : -a) : 0.0;
  }
  return out;
}

namespace detail {

// beta^{k+1} = soft(beta^k - mu X^T(X beta^k - r^k - u^k/mu)/eta, lambda w / eta)
inline Vector beta_update_cached(const AdmmState& s, const DesignMatrix& x, double mu, double eta,
                                 double lambda, const Vector& w, const Vector& x_beta) {
  const Vector z = s.beta - (mu / eta) * tmatvec(x, x_beta - s.r - s.u / mu);
  return soft_threshold(z, (lambda / eta) * w);
}

// r_i^{k+1} = [mu(x_i^T beta^{k+1} - u_i/mu) + (phi''(r_i^k)+c0) r_i^k - phi'(r_i^k) + S_i]
//             / (phi''(r_i^k) + c0 + mu)
inline void r_update_into(const Vector& r, const Vector& u, const Eigen::ArrayXd& s_arr, double m,
                          double mu, double c0, const Vector& x_beta_new, Vector& r_new) {
  const Eigen::ArrayXd sig = sigmoid_array(r.array());
  const Eigen::ArrayXd curv = m * sig * (1.0 - sig) + c0;
  r_new = ((mu * x_beta_new.array() - u.array() + curv * r.array() - m * sig + s_arr) /
           (curv + mu))
              .matrix();
}

inline Vector r_update_cached(const AdmmState& s, const CountVector& counts, double mu, double c0,
                              const Vector& x_beta_new) {
  Vector r_new(s.r.size());
  r_update_into(s.r, s.u, counts_as_array(counts), static_cast<double>(counts.m), mu, c0,
                x_beta_new, r_new);
  return r_new;
}

// sqrt of the H-norm quadratic form assembled from cached pieces.
inline double h_step_from_parts(double eta, double mu, double c0, double dbeta_sq,
                                double x_dbeta_sq, double dr_sq, double du_sq) {
  const double q = eta * dbeta_sq - mu * x_dbeta_sq + (mu + c0) * dr_sq + du_sq / mu;
  const double scale = eta * dbeta_sq + (mu + c0) * dr_sq + du_sq / mu;
  if (q < -1e-10 * std::max(scale, 1.0))
    throw std::runtime_error(
        "h_norm_step: quadratic form negative; eta underestimates ||mu X^T X||, recompute eta");
  return std::sqrt(std::max(q, 0.0));
}

}  // namespace detail

inline Vector beta_update(const AdmmState& s, const DesignMatrix& x, const AdmmConfig& c,
                          double lambda, const Vector& w) {
  if (c.eta <= 0.0) throw std::invalid_argument("beta_update: config.eta must be resolved (> 0)");
  return detail::beta_update_cached(s, x, c.mu, c.eta, lambda, w, matvec(x, s.beta));
}

inline Vector r_update(const AdmmState& s, const DesignMatrix& x, const CountVector& counts,
                       const AdmmConfig& c, const Vector& beta_new) {
  return detail::r_update_cached(s, counts, c.mu, c.c0, matvec(x, beta_new));
}

// u^{k+1} = u^k - mu (X beta^{k+1} - r^{k+1})
inline Vector u_update(const AdmmState& s, const DesignMatrix& x, const AdmmConfig& c,
                       const Vector& beta_new, const Vector& r_new) {
  return s.u - c.mu * (matvec(x, beta_new) - r_new);
}

// ||v^k - v^{k+1}||_H with H = diag(eta I - mu X^T X, (mu + c0) I, I/mu).
inline double h_norm_step(const AdmmState& a, const AdmmState& b, const DesignMatrix& x,
                          const AdmmConfig& c) {
  if (c.eta <= 0.0) throw std::invalid_argument("h_norm_step: config.eta must be resolved (> 0)");
  const Vector dbeta = a.beta - b.beta;
  const Vector dr = a.r - b.r;
  const Vector du = a.u - b.u;
  return detail::h_step_from_parts(c.eta, c.mu, c.c0, dbeta.squaredNorm(),
                                   matvec(x, dbeta).squaredNorm(), dr.squaredNorm(),
                                   du.squaredNorm());
}

// Linearized ADMM for the weighted-l1 counts logistic problem. Stops on
// Boyd-style scaled residuals: primal ||X beta - r||, dual mu ||X^T (r - r_prev)||.
inline SolveResult solve(const DesignMatrix& x, const CountVector& counts, double lambda,
                         const Vector& w, AdmmConfig config,
                         std::optional<AdmmState> init = std::nullopt) {
  config.validate();
  counts.validate();
  const Index n = x.rows();
  const Index d = x.cols();
  if (counts.size() != n) throw std::invalid_argument("solve: counts size mismatch");
  if (w.size() != d) throw std::invalid_argument("solve: weight size mismatch");
  if (lambda < 0.0) throw std::invalid_argument("solve: lambda must be >= 0");

  const double mu = config.mu;
  const double eta = config.eta > 0.0 ? config.eta : estimate_eta(x, mu).value;

  AdmmState s = init.value_or(AdmmState::zeros(d, n));
  if (s.beta.size() != d || s.r.size() != n || s.u.size() != n)
    throw std::invalid_argument("solve: init dimensions mismatch");

  SolveResult out;
  out.trace.eta = eta;

  const double sqrt_n = std::sqrt(static_cast<double>(n));
  const double sqrt_d = std::sqrt(static_cast<double>(d));
  const Eigen::ArrayXd s_arr = counts_as_array(counts);
  const double md = static_cast<double>(counts.m);
  const Vector tau = (lambda / eta) * w;

  Vector x_beta = matvec(x, s.beta);
  Vector beta_new(d), x_beta_new(n), r_new(n), u_new(n), work_n(n), grad_d(d), xtu(d);

  for (int k = 0; k < config.max_iter; ++k) {
    work_n = x_beta - s.r - s.u / mu;
    x.multiply_transposed_into(work_n, grad_d);
    beta_new = soft_threshold(s.beta - (mu / eta) * grad_d, tau);
    x.multiply_into(beta_new, x_beta_new);
    detail::r_update_into(s.r, s.u, s_arr, md, mu, config.c0, x_beta_new, r_new);
    u_new = s.u - mu * (x_beta_new - r_new);

    const double primal = (x_beta_new - r_new).norm();
    work_n = r_new - s.r;
    x.multiply_transposed_into(work_n, grad_d);
    const double dual = mu * grad_d.norm();

    if (config.record_trace) {
      const double h = detail::h_step_from_parts(
          eta, mu, config.c0, (beta_new - s.beta).squaredNorm(),
          (x_beta_new - x_beta).squaredNorm(), (r_new - s.r).squaredNorm(),
          (u_new - s.u).squaredNorm());
      const double obj = (-s_arr * x_beta_new.array() + md * softplus_array(x_beta_new.array())).sum() +
                         lambda * w.cwiseProduct(beta_new.cwiseAbs()).sum();
      out.trace.primal_res.push_back(primal);
      out.trace.dual_res.push_back(dual);
      out.trace.objective.push_back(obj);
      out.trace.h_step.push_back(h);
    }
    if (config.record_history) out.trace.beta_history.push_back(beta_new);

    x.multiply_transposed_into(u_new, xtu);
    const double eps_pri = sqrt_n * config.eps_abs +
                           config.eps_rel * std::max(x_beta_new.norm(), r_new.norm());
    const double eps_dual = sqrt_d * config.eps_abs + config.eps_rel * xtu.norm();

    s.beta.swap(beta_new);
    s.r.swap(r_new);
    s.u.swap(u_new);
    s.k = k + 1;
    x_beta.swap(x_beta_new);

    if (primal <= eps_pri && dual <= eps_dual) {
      out.trace.converged = true;
      break;
    }
  }
  out.trace.iterations = s.k;
  out.coef = Coefficients::from_values(s.beta);
  out.state = std::move(s);
  return out;
}

}  // namespace noisylr
