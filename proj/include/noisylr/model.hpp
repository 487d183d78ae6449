#pragma once

#include <Eigen/Cholesky>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "noisylr/labels.hpp"
#include "noisylr/linalg.hpp"
#include "noisylr/math.hpp"

namespace noisylr {

// Coefficient vector with its support read off the exact zeros.
struct Coefficients {
  Vector values;
  std::vector<Index> support;

  Coefficients() = default;

  static Coefficients from_values(Vector v) {
    if (!v.allFinite()) throw std::invalid_argument("Coefficients: non-finite value");
    Coefficients c;
    c.values = std::move(v);
    for (Index j = 0; j < c.values.size(); ++j)
      if (c.values[j] != 0.0) c.support.push_back(j);
    return c;
  }

  Index dim() const { return values.size(); }
  Index support_size() const { return static_cast<Index>(support.size()); }
};

// phi(t) = m log(1 + e^t) and its derivatives, overflow-safe.
inline double phi(double t, int m) { return m * softplus(t); }
inline double phi_prime(double t, int m) { return m * sigmoid(t); }
inline double phi_double_prime(double t, int m) {
  const double s = sigmoid(t);
  return m * s * (1.0 - s);
}

inline Eigen::ArrayXd counts_as_array(const CountVector& s) {
  return Eigen::Map<const Eigen::ArrayXi>(s.counts.data(), static_cast<Index>(s.counts.size()))
      .cast<double>();
}

// sum_i [ -S_i t_i + phi(t_i) ] at given margins t = X beta.
inline double counts_nll_at_margins(const Vector& t, const CountVector& s) {
  if (t.size() != s.size()) throw std::invalid_argument("counts_nll: dimension mismatch");
  const Eigen::ArrayXd ta = t.array();
  return (-counts_as_array(s) * ta + static_cast<double>(s.m) * softplus_array(ta)).sum();
}

inline double counts_nll(const DesignMatrix& x, const CountVector& s, const Vector& beta) {
  if (s.size() != x.rows()) throw std::invalid_argument("counts_nll: dimension mismatch");
  return counts_nll_at_margins(matvec(x, beta), s);
}

inline double counts_nll(const DesignMatrix& x, const CountVector& s, const Coefficients& beta) {
  return counts_nll(x, s, beta.values);
}

// grad = X^T (phi'(X beta) - S)
inline Vector counts_nll_gradient(const DesignMatrix& x, const CountVector& s, const Vector& beta) {
  if (s.size() != x.rows()) throw std::invalid_argument("counts_nll_gradient: dimension mismatch");
  const Vector t = matvec(x, beta);
  const Vector resid =
      (static_cast<double>(s.m) * sigmoid_array(t.array()) - counts_as_array(s)).matrix();
  return tmatvec(x, resid);
}

inline double penalized_objective(const DesignMatrix& x, const CountVector& s, const Vector& beta,
                                  double lambda, const Vector& w) {
  if (lambda < 0.0) throw std::invalid_argument("penalized_objective: lambda must be >= 0");
  if (w.size() != beta.size()) throw std::invalid_argument("penalized_objective: weight size mismatch");
  return counts_nll(x, s, beta) + lambda * w.cwiseProduct(beta.cwiseAbs()).sum();
}

inline double penalized_objective(const DesignMatrix& x, const CountVector& s,
                                  const Coefficients& beta, double lambda, const Vector& w) {
  return penalized_objective(x, s, beta.values, lambda, w);
}

struct PilotFit {
  Coefficients coef;
  bool ridge_fallback = false;  // refit with l2 = 1e-6 after separation was detected
  int iterations = 0;
  double grad_inf_norm = 0.0;
};

namespace detail {

inline PilotFit newton_pilot(const DesignMatrix& x, const CountVector& s, double ridge,
                             int max_iter) {
  const Index n = x.rows();
  const Index d = x.cols();
  const double tol = 1e-8 * (1.0 + static_cast<double>(s.m) * static_cast<double>(n));

  Vector beta = Vector::Zero(d);
  auto objective = [&](const Vector& b) {
    return counts_nll(x, s, b) + 0.5 * ridge * b.squaredNorm();
  };

  const Eigen::ArrayXd s_arr = counts_as_array(s);
  const double md = static_cast<double>(s.m);

  PilotFit fit;
  for (int it = 1; it <= max_iter; ++it) {
    fit.iterations = it;
    const Vector t = matvec(x, beta);
    const Eigen::ArrayXd sig = sigmoid_array(t.array());
    const Vector resid = (md * sig - s_arr).matrix();
    const Vector curv = (md * sig * (1.0 - sig)).matrix();
    Vector grad = tmatvec(x, resid) + ridge * beta;
    fit.grad_inf_norm = grad.lpNorm<Eigen::Infinity>();
    if (fit.grad_inf_norm <= tol) {
      fit.coef = Coefficients::from_values(beta);
      return fit;
    }

    DenseMatrix hess = x.weighted_gram(curv);
    hess.diagonal().array() += 1e-8 + ridge;
    const Vector dir = hess.ldlt().solve(grad);
    const double descent = grad.dot(dir);
    const double f0 = objective(beta);

    double step = 1.0;
    Vector beta_try = beta - dir;
    for (int h = 0; h < 40 && objective(beta_try) > f0 - 1e-4 * step * descent; ++h) {
      step *= 0.5;
      beta_try = beta - step * dir;
    }
    beta = beta_try;

    if (beta.norm() > 1e6) throw std::runtime_error("pilot: separation detected");
  }
  throw std::runtime_error("pilot: Newton did not converge");
}

}  // namespace detail

// Unpenalized minimizer of the counts likelihood via damped Newton. On
// separation (coefficient norm blowing past 1e6) the pilot is refit with a
// tiny l2 penalty (1e-6) and flagged.
inline PilotFit fit_pilot(const DesignMatrix& x, const CountVector& s, int max_iter = 100) {
  if (s.size() != x.rows()) throw std::invalid_argument("fit_pilot: dimension mismatch");
  try {
    return detail::newton_pilot(x, s, 0.0, max_iter);
  } catch (const std::runtime_error&) {
    PilotFit fit = detail::newton_pilot(x, s, 1e-6, max_iter);
    fit.ridge_fallback = true;
    return fit;
  }
}

// Weights w_j = min(|pilot_j|^(-gamma), cap); exact-zero pilot coordinates
// get the cap.
struct AdaptiveWeights {
  Vector w;
  double gamma = 1.0;
  double cap = 1e8;
  Coefficients pilot;
};

inline AdaptiveWeights adaptive_weights(const Coefficients& pilot, double gamma = 1.0,
                                        double cap = 1e8) {
  if (gamma <= 0.0) throw std::invalid_argument("adaptive_weights: gamma must be positive");
  if (cap <= 0.0) throw std::invalid_argument("adaptive_weights: cap must be positive");
  AdaptiveWeights aw;
  aw.gamma = gamma;
  aw.cap = cap;
  aw.pilot = pilot;
  aw.w.resize(pilot.values.size());
  for (Index j = 0; j < pilot.values.size(); ++j) {
    const double a = std::abs(pilot.values[j]);
    aw.w[j] = a == 0.0 ? cap : std::min(std::pow(a, -gamma), cap);
  }
  return aw;
}

}  // namespace noisylr
