#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

namespace noisylr {

using DenseMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Design matrix with dense row-major or CSR storage. Instances are immutable
// after construction; row-range views share the underlying storage, which is
// what the parallel solver shards on. All products run single-threaded in row
// order, so repeated runs are bitwise reproducible.
class DesignMatrix {
 public:
  DesignMatrix() = default;

  static DesignMatrix dense(DenseMatrix m) {
    if (!m.allFinite()) throw std::invalid_argument("DesignMatrix: non-finite entry");
    DesignMatrix out;
    out.dense_ = std::make_shared<const DenseMatrix>(std::move(m));
    out.rows_ = out.dense_->rows();
    out.cols_ = out.dense_->cols();
    return out;
  }

  static DesignMatrix sparse(SparseMatrix m) {
    m.makeCompressed();
    for (int k = 0; k < m.nonZeros(); ++k) {
      if (!std::isfinite(m.valuePtr()[k]))
        throw std::invalid_argument("DesignMatrix: non-finite entry");
    }
    DesignMatrix out;
    out.sparse_ = std::make_shared<const SparseMatrix>(std::move(m));
    out.rows_ = out.sparse_->rows();
    out.cols_ = out.sparse_->cols();
    return out;
  }

  static DesignMatrix from_triplets(Index n, Index d,
                                    const std::vector<Eigen::Triplet<double>>& t) {
    SparseMatrix m(n, d);
    m.setFromTriplets(t.begin(), t.end());
    return sparse(std::move(m));
  }

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  bool is_sparse() const { return sparse_ != nullptr; }

  Index nnz() const {
    if (!sparse_) return rows_ * cols_;
    if (row_begin_ == 0 && rows_ == sparse_->rows()) return sparse_->nonZeros();
    return sparse_->outerIndexPtr()[row_begin_ + rows_] - sparse_->outerIndexPtr()[row_begin_];
  }

  // X * beta
  Vector multiply(const Vector& beta) const {
    Vector out;
    multiply_into(beta, out);
    return out;
  }

  void multiply_into(const Vector& beta, Vector& out) const {
    if (beta.size() != cols_) throw std::invalid_argument("matvec: dimension mismatch");
    out.resize(rows_);
    if (sparse_)
      out.noalias() = sparse_->middleRows(row_begin_, rows_) * beta;
    else
      out.noalias() = dense_->middleRows(row_begin_, rows_) * beta;
  }

  // X^T * z
  Vector multiply_transposed(const Vector& z) const {
    Vector out;
    multiply_transposed_into(z, out);
    return out;
  }

  void multiply_transposed_into(const Vector& z, Vector& out) const {
    if (z.size() != rows_) throw std::invalid_argument("tmatvec: dimension mismatch");
    out.resize(cols_);
    if (sparse_)
      out.noalias() = sparse_->middleRows(row_begin_, rows_).transpose() * z;
    else
      out.noalias() = dense_->middleRows(row_begin_, rows_).transpose() * z;
  }

  double row_dot(Index i, const Vector& beta) const {
    if (i < 0 || i >= rows_) throw std::out_of_range("row_dot: row out of range");
    if (beta.size() != cols_) throw std::invalid_argument("row_dot: dimension mismatch");
    if (sparse_) {
      double acc = 0.0;
      for (SparseMatrix::InnerIterator it(*sparse_, row_begin_ + i); it; ++it)
        acc += it.value() * beta[it.col()];
      return acc;
    }
    return dense_->row(row_begin_ + i).dot(beta);
  }

  // X^T diag(w) X as a dense d x d matrix (pilot Newton Hessian).
  DenseMatrix weighted_gram(const Vector& w) const {
    if (w.size() != rows_) throw std::invalid_argument("weighted_gram: dimension mismatch");
    if (!sparse_) {
      const auto block = dense_->middleRows(row_begin_, rows_);
      return block.transpose() * w.asDiagonal() * block;
    }
    DenseMatrix g = DenseMatrix::Zero(cols_, cols_);
    for (Index i = 0; i < rows_; ++i) {
      for (SparseMatrix::InnerIterator it(*sparse_, row_begin_ + i); it; ++it) {
        for (SparseMatrix::InnerIterator jt(*sparse_, row_begin_ + i); jt; ++jt)
          g(it.col(), jt.col()) += w[i] * it.value() * jt.value();
      }
    }
    return g;
  }

  // View of rows [start, start+count); shares storage.
  DesignMatrix rows_view(Index start, Index count) const {
    if (start < 0 || count < 0 || start + count > rows_)
      throw std::out_of_range("rows_view: range out of bounds");
    DesignMatrix out(*this);
    out.row_begin_ = row_begin_ + start;
    out.rows_ = count;
    return out;
  }

  // Gather of arbitrary rows (train/test splits); copies.
  DesignMatrix select_rows(const std::vector<Index>& idx) const {
    if (sparse_) {
      std::vector<Eigen::Triplet<double>> trip;
      trip.reserve(static_cast<std::size_t>(idx.size()) * 8);
      for (std::size_t out_i = 0; out_i < idx.size(); ++out_i) {
        const Index src = idx[out_i];
        if (src < 0 || src >= rows_) throw std::out_of_range("select_rows: index out of range");
        for (SparseMatrix::InnerIterator it(*sparse_, row_begin_ + src); it; ++it)
          trip.emplace_back(static_cast<int>(out_i), static_cast<int>(it.col()), it.value());
      }
      return from_triplets(static_cast<Index>(idx.size()), cols_, trip);
    }
    DenseMatrix m(static_cast<Index>(idx.size()), cols_);
    for (std::size_t out_i = 0; out_i < idx.size(); ++out_i) {
      const Index src = idx[out_i];
      if (src < 0 || src >= rows_) throw std::out_of_range("select_rows: index out of range");
      m.row(static_cast<Index>(out_i)) = dense_->row(row_begin_ + src);
    }
    return dense(std::move(m));
  }

  // Gather of columns (support-restricted refits); copies.
  DesignMatrix select_columns(const std::vector<Index>& cols) const {
    std::vector<Index> remap(static_cast<std::size_t>(cols_), -1);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const Index c = cols[k];
      if (c < 0 || c >= cols_) throw std::out_of_range("select_columns: index out of range");
      remap[static_cast<std::size_t>(c)] = static_cast<Index>(k);
    }
    if (sparse_) {
      std::vector<Eigen::Triplet<double>> trip;
      for (Index i = 0; i < rows_; ++i) {
        for (SparseMatrix::InnerIterator it(*sparse_, row_begin_ + i); it; ++it) {
          const Index k = remap[static_cast<std::size_t>(it.col())];
          if (k >= 0) trip.emplace_back(static_cast<int>(i), static_cast<int>(k), it.value());
        }
      }
      return from_triplets(rows_, static_cast<Index>(cols.size()), trip);
    }
    DenseMatrix m(rows_, static_cast<Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k)
      m.col(static_cast<Index>(k)) = dense_->middleRows(row_begin_, rows_).col(cols[k]);
    return dense(std::move(m));
  }

  // Appends a constant column (unpenalized intercept support).
  DesignMatrix with_constant_column(double value = 1.0) const {
    if (sparse_) {
      std::vector<Eigen::Triplet<double>> trip;
      trip.reserve(static_cast<std::size_t>(nnz()) + rows_);
      for (Index i = 0; i < rows_; ++i) {
        for (SparseMatrix::InnerIterator it(*sparse_, row_begin_ + i); it; ++it)
          trip.emplace_back(static_cast<int>(i), static_cast<int>(it.col()), it.value());
        trip.emplace_back(static_cast<int>(i), static_cast<int>(cols_), value);
      }
      return from_triplets(rows_, cols_ + 1, trip);
    }
    DenseMatrix m(rows_, cols_ + 1);
    m.leftCols(cols_) = dense_->middleRows(row_begin_, rows_);
    m.col(cols_).setConstant(value);
    return dense(std::move(m));
  }

  DenseMatrix to_dense() const {
    if (sparse_) return DenseMatrix(sparse_->middleRows(row_begin_, rows_));
    return dense_->middleRows(row_begin_, rows_);
  }

 private:
  std::shared_ptr<const DenseMatrix> dense_;
  std::shared_ptr<const SparseMatrix> sparse_;
  Index row_begin_ = 0;
  Index rows_ = 0;
  Index cols_ = 0;
};

inline Vector matvec(const DesignMatrix& x, const Vector& beta) { return x.multiply(beta); }
inline Vector tmatvec(const DesignMatrix& x, const Vector& z) { return x.multiply_transposed(z); }

struct SpectralEstimate {
  double value = 0.0;  // safety * power-iteration estimate of lambda_max(mu X^T X)
  int iterations = 0;
  bool converged = false;
};

// Power iteration on v -> mu X^T (X v). Convergence is declared when the
// relative Rayleigh-quotient change drops below tol. The safety factor guards
// against the estimate approaching lambda_max from below.
inline SpectralEstimate estimate_eta(const DesignMatrix& x, double mu, double tol = 1e-6,
                                     double safety = 1.01, int max_iter = 1000,
                                     std::uint64_t seed = 0x706F776572ull) {
  if (mu <= 0.0) throw std::invalid_argument("estimate_eta: mu must be positive");
  if (!(tol > 0.0 && tol < 1.0)) throw std::invalid_argument("estimate_eta: tol must be in (0,1)");
  if (safety < 1.0) throw std::invalid_argument("estimate_eta: safety must be >= 1");

  const Index d = x.cols();
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(d);
  for (Index j = 0; j < d; ++j) v[j] = normal(gen);
  v.normalize();

  SpectralEstimate est;
  double rho_prev = -1.0;
  for (int it = 1; it <= max_iter; ++it) {
    const Vector w = mu * tmatvec(x, matvec(x, v));
    const double rho = v.dot(w);
    est.iterations = it;
    est.value = safety * rho;
    const double wn = w.norm();
    if (wn == 0.0) {  // zero operator
      est.value = 0.0;
      est.converged = true;
      return est;
    }
    if (rho_prev >= 0.0 && std::abs(rho - rho_prev) <= tol * std::max(rho, 1e-300)) {
      est.converged = true;
      return est;
    }
    rho_prev = rho;
    v = w / wn;
  }
  est.converged = false;
  return est;
}

}  // namespace noisylr
