#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace kronfab {

/// Index type wide enough for product dimensions n1*n2 up to 2^53,
/// even though dense formation is capped far below that.
using Index = std::int64_t;

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using ComplexVector = Eigen::VectorXcd;
using ComplexMatrix = Eigen::MatrixXcd;
/// Compressed-column storage; duplicate triplets are summed on construction.
using SparseMatrix = Eigen::SparseMatrix<double>;
using Complex = std::complex<double>;

/// Total dimension above which explicit formation of Kronecker products is refused.
inline constexpr Index kDenseFormationCap = 10000;

inline bool is_symmetric(const Matrix& m, double tol = 1e-13) {
  if (m.rows() != m.cols()) return false;
  const double scale = m.cwiseAbs().maxCoeff();
  if (scale == 0.0) return true;
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

inline bool is_symmetric(const SparseMatrix& m, double tol = 1e-13) {
  if (m.rows() != m.cols()) return false;
  SparseMatrix d = SparseMatrix(m.transpose()) - m;
  double scale = 0.0, diff = 0.0;
  for (int k = 0; k < m.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(m, k); it; ++it)
      scale = std::max(scale, std::abs(it.value()));
  for (int k = 0; k < d.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(d, k); it; ++it)
      diff = std::max(diff, std::abs(it.value()));
  if (scale == 0.0) return diff == 0.0;
  return diff <= tol * scale;
}

// ---------------------------------------------------------------------------
// vec / Kronecker utilities
// ---------------------------------------------------------------------------

/// Column-stacking vec. vec(X)[j*rows+i] = X(i,j).
inline Vector vec(const Matrix& x) {
  return Eigen::Map<const Vector>(x.data(), x.size());
}

/// Inverse of vec: requires length(v) == n1*n2.
inline Matrix unvec(const Vector& v, Index n1, Index n2) {
  if (v.size() != n1 * n2)
    throw std::invalid_argument("unvec: length " + std::to_string(v.size()) +
                                " does not match " + std::to_string(n1) + "x" +
                                std::to_string(n2));
  return Eigen::Map<const Matrix>(v.data(), n1, n2);
}

/// Dense Kronecker product X (x) Y, blocks x_ij * Y.
inline Matrix kron_dense(const Matrix& x, const Matrix& y) {
  const Index xr = x.rows(), xc = x.cols(), yr = y.rows(), yc = y.cols();
  constexpr Index kMax = std::numeric_limits<Eigen::Index>::max();
  if ((yr > 0 && xr > kMax / yr) || (yc > 0 && xc > kMax / yc))
    throw std::overflow_error("kron_dense: result dimensions overflow index type");
  const Index r = xr * yr, c = xc * yc;
  if (c > 0 && r > kMax / c)
    throw std::overflow_error("kron_dense: result size overflows index type");
  Matrix out(r, c);
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < x.cols(); ++j)
      out.block(i * y.rows(), j * y.cols(), y.rows(), y.cols()) = x(i, j) * y;
  return out;
}

/// All pairwise sums eigs1[i] + eigs2[j] in vec-consistent order:
/// entry (i,j) lands at index j*n1 + i.
inline Vector kron_sum_spectrum(const Vector& eigs1, const Vector& eigs2) {
  const Index n1 = eigs1.size(), n2 = eigs2.size();
  Vector out(n1 * n2);
  for (Index j = 0; j < n2; ++j)
    for (Index i = 0; i < n1; ++i) out[j * n1 + i] = eigs1[i] + eigs2[j];
  return out;
}

/// Toeplitz tridiagonal matrix with constant sub/diag/super entries.
inline SparseMatrix tridiag(Index n, double sub, double diag, double sup) {
  if (n < 1) throw std::invalid_argument("tridiag: n must be >= 1");
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(3 * n));
  for (Index i = 0; i < n; ++i) {
    trip.emplace_back(i, i, diag);
    if (i + 1 < n) {
      trip.emplace_back(i + 1, i, sub);
      trip.emplace_back(i, i + 1, sup);
    }
  }
  SparseMatrix m(n, n);
  m.setFromTriplets(trip.begin(), trip.end());
  m.makeCompressed();
  return m;
}

// ---------------------------------------------------------------------------
// LinOp: square operator handle (matrix-free apply, optional direct solve)
// ---------------------------------------------------------------------------

class LinOp {
 public:
  LinOp() = default;

  static LinOp dense(Matrix m) {
    if (m.rows() != m.cols()) throw std::invalid_argument("LinOp::dense: square matrix required");
    LinOp op;
    op.n_ = m.rows();
    op.symmetric_ = is_symmetric(m);
    auto p = std::make_shared<Matrix>(std::move(m));
    op.apply_mat_ = [p](const Matrix& x) -> Matrix { return (*p) * x; };
    op.solve_ = [p](const Vector& v) -> Vector { return p->partialPivLu().solve(v); };
    op.dense_ = p;
    return op;
  }

  static LinOp sparse(SparseMatrix m) {
    if (m.rows() != m.cols()) throw std::invalid_argument("LinOp::sparse: square matrix required");
    m.makeCompressed();
    LinOp op;
    op.n_ = m.rows();
    op.symmetric_ = is_symmetric(m);
    auto p = std::make_shared<SparseMatrix>(std::move(m));
    op.apply_mat_ = [p](const Matrix& x) -> Matrix { return (*p) * x; };
    // Direct factorization computed once, on first solve.
    struct Fact {
      std::once_flag once;
      Eigen::SparseLU<SparseMatrix> lu;
      bool ok = false;
    };
    auto fact = std::make_shared<Fact>();
    op.solve_ = [p, fact](const Vector& v) -> Vector {
      std::call_once(fact->once, [&] {
        fact->lu.compute(*p);
        fact->ok = fact->lu.info() == Eigen::Success;
      });
      if (!fact->ok) throw std::runtime_error("LinOp::solve: sparse LU factorization failed (singular operator?)");
      return fact->lu.solve(v);
    };
    op.sparse_ = p;
    return op;
  }

  static LinOp diagonal(Vector d) {
    LinOp op;
    op.n_ = d.size();
    op.symmetric_ = true;
    auto p = std::make_shared<Vector>(std::move(d));
    op.apply_mat_ = [p](const Matrix& x) -> Matrix { return p->asDiagonal() * x; };
    op.solve_ = [p](const Vector& v) -> Vector {
      if (p->cwiseAbs().minCoeff() == 0.0) throw std::runtime_error("LinOp::solve: singular diagonal");
      return v.cwiseQuotient(*p);
    };
    return op;
  }

  static LinOp from_apply(Index n, std::function<Vector(const Vector&)> apply, bool symmetric,
                          std::function<Vector(const Vector&)> solve = nullptr) {
    LinOp op;
    op.n_ = n;
    op.symmetric_ = symmetric;
    op.apply_mat_ = [apply](const Matrix& x) -> Matrix {
      Matrix y(x.rows(), x.cols());
      for (Index j = 0; j < x.cols(); ++j) y.col(j) = apply(x.col(j));
      return y;
    };
    op.solve_ = std::move(solve);
    return op;
  }

  Index rows() const { return n_; }
  bool symmetric() const { return symmetric_; }
  bool has_solve() const { return static_cast<bool>(solve_); }
  bool valid() const { return static_cast<bool>(apply_mat_); }

  Vector apply(const Vector& v) const {
    if (v.size() != n_) throw std::invalid_argument("LinOp::apply: dimension mismatch");
    return apply_mat_(v);
  }

  Matrix apply_mat(const Matrix& x) const {
    if (x.rows() != n_) throw std::invalid_argument("LinOp::apply_mat: dimension mismatch");
    return apply_mat_(x);
  }

  Vector solve(const Vector& v) const {
    if (!solve_) throw std::runtime_error("LinOp::solve: no solve available for this operator");
    if (v.size() != n_) throw std::invalid_argument("LinOp::solve: dimension mismatch");
    return solve_(v);
  }

  /// Underlying dense matrix if this handle was built from one (oracle paths).
  const Matrix* dense_matrix() const { return dense_ ? dense_.get() : nullptr; }
  const SparseMatrix* sparse_matrix() const { return sparse_ ? sparse_.get() : nullptr; }

 private:
  Index n_ = 0;
  bool symmetric_ = false;
  std::function<Matrix(const Matrix&)> apply_mat_;
  std::function<Vector(const Vector&)> solve_;
  std::shared_ptr<const Matrix> dense_;
  std::shared_ptr<const SparseMatrix> sparse_;
};

// ---------------------------------------------------------------------------
// KronSumOp: A = M2 (x) I + I (x) M1, stored by its factors, never formed.
//
// The vec order fixes the roles: A*vec(X) = vec(M1*X + X*M2^T) for X of shape
// n1 x n2, i.e. M1 is the "left" factor of the matrix identity while M2 is the
// leftmost Kronecker factor. Multi-term sums written M1 (+) M2 (+) ... place
// M1 leftmost instead; see multiterm_structured.
// ---------------------------------------------------------------------------

struct KronSumOp {
  LinOp m1;
  LinOp m2;
  Index n1 = 0;
  Index n2 = 0;

  KronSumOp() = default;
  KronSumOp(LinOp m1_, LinOp m2_)
      : m1(std::move(m1_)), m2(std::move(m2_)), n1(m1.rows()), n2(m2.rows()) {}

  Index dim() const { return n1 * n2; }
  bool symmetric() const { return m1.symmetric() && m2.symmetric(); }

  Vector apply(const Vector& v) const {
    if (v.size() != dim()) throw std::invalid_argument("KronSumOp::apply: dimension mismatch");
    Eigen::Map<const Matrix> x(v.data(), n1, n2);
    Matrix y = m1.apply_mat(x);
    y.noalias() += m2.apply_mat(x.transpose()).transpose();
    return Eigen::Map<const Vector>(y.data(), y.size());
  }
};

/// Matrix-free application of A = M2 (x) I + I (x) M1 to v = vec(X).
inline Vector kron_sum_apply(const KronSumOp& op, const Vector& v) { return op.apply(v); }

/// Explicitly formed A for oracles and small cases. Guarded by the dense cap.
inline Matrix form_kron_sum(const Matrix& m1, const Matrix& m2) {
  const Index n1 = m1.rows(), n2 = m2.rows();
  if (n1 * n2 > kDenseFormationCap)
    throw std::invalid_argument("form_kron_sum: total dimension " + std::to_string(n1 * n2) +
                                " exceeds dense formation cap " + std::to_string(kDenseFormationCap));
  return kron_dense(m2, Matrix::Identity(n1, n1)) + kron_dense(Matrix::Identity(n2, n2), m1);
}

// ---------------------------------------------------------------------------
// Low-rank right-hand side b = vec(B1 * B2^T)
// ---------------------------------------------------------------------------

struct LowRankRHS {
  Matrix b1;  // n1 x ell
  Matrix b2;  // n2 x ell

  LowRankRHS() = default;
  LowRankRHS(Matrix b1_, Matrix b2_) : b1(std::move(b1_)), b2(std::move(b2_)) {
    if (b1.cols() != b2.cols() || b1.cols() < 1)
      throw std::invalid_argument("LowRankRHS: factor rank mismatch or rank < 1");
  }
  LowRankRHS(Vector v1, Vector v2) : b1(std::move(v1)), b2(std::move(v2)) {}

  Index rank() const { return b1.cols(); }
  Vector materialize() const { return vec(b1 * b2.transpose()); }
};

}  // namespace kronfab
