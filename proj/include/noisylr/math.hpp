#pragma once

#include <Eigen/Dense>
#include <cmath>

namespace noisylr {

// Overflow-safe logistic function 1 / (1 + exp(-t)).
inline double sigmoid(double t) {
  if (t >= 0.0) {
    return 1.0 / (1.0 + std::exp(-t));
  }
  const double e = std::exp(t);
  return e / (1.0 + e);
}

// Overflow-safe log(1 + exp(t)).
inline double softplus(double t) {
  if (t > 0.0) {
    return t + std::log1p(std::exp(-t));
  }
  return std::log1p(std::exp(t));
}

inline double sqr(double x) { return x * x; }

// Vectorized logistic: e = exp(-|t|) keeps the exponent non-positive, then
// the two sign branches share it.
inline Eigen::ArrayXd sigmoid_array(const Eigen::ArrayXd& t) {
  const Eigen::ArrayXd e = (-t.abs()).exp();
  return (t >= 0.0).select(1.0 / (1.0 + e), e / (1.0 + e));
}

// Vectorized log(1 + exp(t)) = max(t, 0) + log(1 + exp(-|t|)). The inner
// exponent is in (0, 1], where plain log(1 + x) is accurate to ~1e-16
// absolute, which is all the summed objective needs.
inline Eigen::ArrayXd softplus_array(const Eigen::ArrayXd& t) {
  return t.max(0.0) + (1.0 + (-t.abs()).exp()).log();
}

}  // namespace noisylr
