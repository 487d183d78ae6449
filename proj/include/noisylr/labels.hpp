#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "noisylr/linalg.hpp"
#include "noisylr/math.hpp"
#include "noisylr/rng.hpp"

namespace noisylr {

// Two-class posterior; p2 is derived so p1 + p2 = 1 holds exactly.
struct PosteriorPair {
  double p1 = 0.5;

  PosteriorPair() = default;
  explicit PosteriorPair(double prob_class1) : p1(prob_class1) {
    if (!(p1 >= 0.0 && p1 <= 1.0))
      throw std::invalid_argument("PosteriorPair: p1 must be in [0,1]");
  }
  double p2() const { return 1.0 - p1; }
};

inline PosteriorPair posterior(const Vector& x, const Vector& beta) {
  if (x.size() != beta.size()) throw std::invalid_argument("posterior: dimension mismatch");
  return PosteriorPair(sigmoid(x.dot(beta)));
}

// Probability that a posterior-sampled label disagrees with the truth,
// 1 - p1^2 - p2^2; largest at p1 = 0.5.
inline double label_error_prob(const PosteriorPair& p) {
  return 1.0 - sqr(p.p1) - sqr(p.p2());
}

// Base-2 entropy of the class-1 posterior, with 0*log0 := 0.
inline double entropy(const PosteriorPair& p) {
  auto term = [](double q) { return q > 0.0 ? -q * std::log2(q) : 0.0; };
  return term(p.p1) + term(p.p2());
}

// Vote counts S_i in {0..m} for class 1, one entry per sample. Truth labels
// are the m = 1 special case. `imputed`, when non-empty, marks rows whose
// counts were filled in rather than observed.
struct CountVector {
  std::vector<int> counts;
  int m = 1;
  std::vector<std::uint8_t> imputed;

  Index size() const { return static_cast<Index>(counts.size()); }

  void validate() const {
    if (m < 1) throw std::invalid_argument("CountVector: m must be >= 1");
    for (int c : counts)
      if (c < 0 || c > m) throw std::invalid_argument("CountVector: count outside [0,m]");
    if (!imputed.empty() && imputed.size() != counts.size())
      throw std::invalid_argument("CountVector: imputed mask size mismatch");
  }

  static CountVector from_labels(const std::vector<int>& y) {
    CountVector s;
    s.m = 1;
    s.counts = y;
    s.validate();
    return s;
  }
};

// Label-generation law: exact truth, Multinomial votes at the true posterior,
// or Dirichlet-Multinomial votes with overdispersion alpha0.
struct NoiseModel {
  enum class Kind { kTruth, kMultinomial, kDirichletMultinomial };

  Kind kind = Kind::kTruth;
  int m = 1;
  double alpha0 = 1.0;

  static NoiseModel truth(int m = 1) { return make(Kind::kTruth, m, 1.0); }
  static NoiseModel multinomial(int m) { return make(Kind::kMultinomial, m, 1.0); }
  static NoiseModel dirichlet_multinomial(int m, double alpha0) {
    return make(Kind::kDirichletMultinomial, m, alpha0);
  }

 private:
  static NoiseModel make(Kind k, int m, double alpha0) {
    if (m < 1) throw std::invalid_argument("NoiseModel: m must be >= 1");
    if (alpha0 <= 0.0) throw std::invalid_argument("NoiseModel: alpha0 must be positive");
    NoiseModel n;
    n.kind = k;
    n.m = m;
    n.alpha0 = alpha0;
    return n;
  }
};

// Beta(a, b) by the two-Gamma-ratio construction. At extreme shapes both
// Gamma draws can underflow to zero; the ratio's limit law is then
// Bernoulli(a / (a + b)).
inline double draw_beta(double a, double b, std::mt19937_64& rng) {
  if (a <= 0.0 || b <= 0.0) throw std::invalid_argument("draw_beta: shapes must be positive");
  std::gamma_distribution<double> ga(a, 1.0);
  std::gamma_distribution<double> gb(b, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  const double s = x + y;
  if (s > 0.0 && std::isfinite(s)) return x / s;
  std::bernoulli_distribution coin(a / (a + b));
  return coin(rng) ? 1.0 : 0.0;
}

inline int draw_binomial(int m, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return 0;
  if (p >= 1.0) return m;
  std::binomial_distribution<int> bin(m, p);
  return bin(rng);
}

// One vote count S in [0, m]. The Dirichlet-Multinomial branch uses the
// hierarchical form: q ~ Beta(alpha0*p1, alpha0*p2), then S ~ Binomial(m, q)
// (the two-category Dirichlet degenerates to a Beta). The Truth branch needs
// the actual label.
inline int draw_counts(const PosteriorPair& p, const NoiseModel& model, std::mt19937_64& rng,
                       std::optional<int> truth_label = std::nullopt) {
  switch (model.kind) {
    case NoiseModel::Kind::kTruth: {
      if (!truth_label.has_value())
        throw std::invalid_argument("draw_counts: truth model requires a supplied label");
      const int y = *truth_label;
      if (y != 0 && y != 1) throw std::invalid_argument("draw_counts: label must be 0/1");
      return model.m * y;
    }
    case NoiseModel::Kind::kMultinomial:
      return draw_binomial(model.m, p.p1, rng);
    case NoiseModel::Kind::kDirichletMultinomial: {
      if (p.p1 <= 0.0) return 0;
      if (p.p1 >= 1.0) return model.m;
      const double q = draw_beta(model.alpha0 * p.p1, model.alpha0 * p.p2(), rng);
      return draw_binomial(model.m, q, rng);
    }
  }
  throw std::logic_error("draw_counts: unreachable");
}

struct CountMoments {
  double mean = 0.0;
  double var = 0.0;
};

// Mean and variance of S under the Dirichlet-Multinomial law:
// E S = m p1, Var S = m p1 (1 - p1) (m + alpha0) / (1 + alpha0).
inline CountMoments moments(int m, double alpha0, double p1) {
  if (m < 1) throw std::invalid_argument("moments: m must be >= 1");
  if (alpha0 <= 0.0) throw std::invalid_argument("moments: alpha0 must be positive");
  if (!(p1 >= 0.0 && p1 <= 1.0)) throw std::invalid_argument("moments: p1 must be in [0,1]");
  CountMoments out;
  out.mean = m * p1;
  out.var = m * p1 * (1.0 - p1) * (m + alpha0) / (1.0 + alpha0);
  return out;
}

// Per-row independent draws driven by the posteriors of beta_ref. Each row
// uses a generator derived from (seed, row), so output does not depend on
// evaluation order or shard layout.
inline CountVector generate_dataset_counts(const DesignMatrix& x, const Vector& beta_ref,
                                           const NoiseModel& model, std::uint64_t seed,
                                           const std::vector<int>* truth_labels = nullptr) {
  if (model.kind == NoiseModel::Kind::kTruth) {
    if (truth_labels == nullptr)
      throw std::invalid_argument("generate_dataset_counts: truth model requires labels");
    if (static_cast<Index>(truth_labels->size()) != x.rows())
      throw std::invalid_argument("generate_dataset_counts: label size mismatch");
  }
  CountVector out;
  out.m = model.m;
  out.counts.resize(static_cast<std::size_t>(x.rows()));
  for (Index i = 0; i < x.rows(); ++i) {
    auto rng = derived_rng(seed, rng_stream::kRows, static_cast<std::uint64_t>(i));
    const PosteriorPair p(sigmoid(x.row_dot(i, beta_ref)));
    std::optional<int> y;
    if (truth_labels) y = (*truth_labels)[static_cast<std::size_t>(i)];
    out.counts[static_cast<std::size_t>(i)] = draw_counts(p, model, rng, y);
  }
  return out;
}

// Counts for unlabeled rows, drawn exactly as generate_dataset_counts and
// flagged as imputed.
inline CountVector impute_missing(const DesignMatrix& x_missing, const Vector& beta_fit,
                                  const NoiseModel& model, std::uint64_t seed) {
  CountVector out = generate_dataset_counts(x_missing, beta_fit, model, seed);
  out.imputed.assign(out.counts.size(), 1);
  return out;
}

}  // namespace noisylr
