#pragma once

#include "kronfab/kronfun.hpp"

namespace kronfab {

// ---------------------------------------------------------------------------
// Dense Sylvester solves (Bartels-Stewart, complex Schur flavor)
// ---------------------------------------------------------------------------

namespace detail {

/// Triangular Sylvester core: S Y + Y T = C with S, T upper triangular.
/// Throws when some s_ii + t_jj vanishes (spectra of A and -B^T overlap).
inline ComplexMatrix sylvester_triangular(const ComplexMatrix& s, const ComplexMatrix& t,
                                          const ComplexMatrix& c) {
  const Index m = s.rows(), k = t.rows();
  const double scale =
      s.diagonal().cwiseAbs().maxCoeff() + t.diagonal().cwiseAbs().maxCoeff();
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < k; ++j)
      if (std::abs(s(i, i) + t(j, j)) <= 1e-13 * std::max(scale, 1e-300))
        throw std::runtime_error(
            "sylvester: singular operator, projected spectra overlap (eigenvalue sum " +
            std::to_string(std::abs(s(i, i) + t(j, j))) + ")");
  ComplexMatrix y(m, k);
  ComplexMatrix st = s;
  for (Index j = 0; j < k; ++j) {
    ComplexVector rhs = c.col(j);
    for (Index i = 0; i < j; ++i) rhs -= t(i, j) * y.col(i);
    st.diagonal() = s.diagonal().array() + t(j, j);
    y.col(j) = st.triangularView<Eigen::Upper>().solve(rhs);
  }
  return y;
}

}  // namespace detail

/// Precomputed Schur forms of a projected pair (T1, T2), reusable across
/// arbitrary (complex) shifts: solves (T1 - s1 I) Y + Y (T2 - s2 I)^T = C.
class ShiftedSylvesterSolver {
 public:
  ShiftedSylvesterSolver(const Matrix& t1, const Matrix& t2) {
    Eigen::ComplexSchur<ComplexMatrix> sch1(t1.cast<Complex>(), true);
    Eigen::ComplexSchur<ComplexMatrix> sch2(ComplexMatrix(t2.transpose().cast<Complex>()), true);
    if (sch1.info() != Eigen::Success || sch2.info() != Eigen::Success)
      throw std::runtime_error("sylvester: Schur decomposition failed");
    u_ = sch1.matrixU();
    s_ = sch1.matrixT();
    w_ = sch2.matrixU();
    t_ = sch2.matrixT();
  }

  ComplexMatrix solve(const ComplexMatrix& c, Complex shift1 = 0.0, Complex shift2 = 0.0) const {
    ComplexMatrix s = s_;
    s.diagonal().array() -= shift1;
    ComplexMatrix t = t_;
    t.diagonal().array() -= shift2;
    const ComplexMatrix chat = u_.adjoint() * c * w_;
    return u_ * detail::sylvester_triangular(s, t, chat) * w_.adjoint();
  }

  /// Eigenvalues of T1 and T2 (Schur diagonals), for disjointness checks.
  ComplexVector eigs1() const { return s_.diagonal(); }
  ComplexVector eigs2() const { return t_.diagonal(); }

 private:
  ComplexMatrix u_, s_;  // T1   = U S U^H
  ComplexMatrix w_, t_;  // T2^T = W T W^H
};

/// Dense solve of A X + X B^T = C.
inline Matrix sylvester_small(const Matrix& a, const Matrix& b, const Matrix& c) {
  if (a.rows() != a.cols() || b.rows() != b.cols() || c.rows() != a.rows() || c.cols() != b.rows())
    throw std::invalid_argument("sylvester_small: dimension mismatch");
  ShiftedSylvesterSolver solver(a, b);
  return solver.solve(c.cast<Complex>()).real();
}

// ---------------------------------------------------------------------------
// Galerkin projection for Lyapunov / Sylvester equations
// ---------------------------------------------------------------------------

enum class ShiftSplit { full_on_m1, half_half };

struct SylvesterSolution {
  FactoredVector x;             // P_m Y_m P_m^T in factored form
  Matrix y;                     // projected solution Y_m
  double residual_norm = 0.0;   // true residual, Frobenius norm
  double galerkin_norm = 0.0;   // ||P^T R P||_F, the imposed orthogonality
  KrylovBasis basis;
};

/// Galerkin solution of M1 X + X M1^T = b1 b1^T in a Krylov space of
/// dimension m. The residual norm comes from the low-rank terms of the
/// Arnoldi relation when available, and from direct application otherwise.
inline SylvesterSolution galerkin_lyapunov(const LinOp& m1op, const Vector& b1, Index m,
                                           SpaceKind space = SpaceKind::krylov,
                                           double mem_cap = 1e8) {
  detail::BasisDriver d(m1op, b1, m, space, mem_cap);
  d.advance_to(m);
  const Index k = d.dim();
  const Matrix t1 = d.projected(k);
  const Vector bhat = d.bhat(k);
  SylvesterSolution out;
  out.y = sylvester_small(t1, t1, bhat * bhat.transpose());
  out.galerkin_norm = (t1 * out.y + out.y * t1.transpose() - bhat * bhat.transpose()).norm();
  const Matrix p = d.basis_cols(k);
  out.x = FactoredVector(p, out.y, p);
  KrylovBasis basis = d.snapshot(k);
  if (space == SpaceKind::krylov && basis.next.size() > 0) {
    const double h = basis.resid_coeff;
    out.residual_norm = h * std::sqrt(out.y.row(k - 1).squaredNorm() + out.y.col(k - 1).squaredNorm());
  } else if (basis.breakdown) {
    out.residual_norm = 0.0;
  } else {
    // Extended space: R = U Y P^T + P Y U^T - b1 b1^T with U = M1 P.
    const Matrix u = m1op.apply_mat(p);
    Matrix left(p.rows(), 2 * k + 1), right(p.rows(), 2 * k + 1);
    left << u, p, b1;
    right << p, u, b1;
    Matrix mid = Matrix::Zero(2 * k + 1, 2 * k + 1);
    mid.block(0, 0, k, k) = out.y;
    mid.block(k, k, k, k) = out.y;
    mid(2 * k, 2 * k) = -1.0;
    out.residual_norm = FactoredVector(left, mid, right).norm();
  }
  out.basis = std::move(basis);
  return out;
}

/// f(A) = A^{-1} through the projected Sylvester equation
/// T1 Y + Y T2^T = b1hat b2hat^T, equivalent to structured_fAb with
/// f = inverse (two routes, one answer).
inline StructuredResult inverse_structured(const LinOp& m1op, const Vector& b1, const LinOp& m2op,
                                           const Vector& b2, Index m_max,
                                           const StructuredOptions& opts = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  detail::BasisDriver d1(m1op, b1, m_max, opts.space, opts.mem_cap);
  const Index m_max2 = opts.m_max2 < 0 ? m_max : opts.m_max2;
  detail::BasisDriver d2(m2op, b2, m_max2, opts.space, opts.mem_cap);
  StructuredResult out;
  out.path = EvalPath::galerkin;
  Matrix y_prev;
  Index k1 = 0, k2 = 0;
  for (Index target = opts.stride;; target += opts.stride) {
    d1.advance_to(std::min(target, m_max));
    d2.advance_to(std::min(target, m_max2));
    if (d1.dim() == k1 && d2.dim() == k2) break;
    k1 = d1.dim();
    k2 = d2.dim();
    Matrix y = sylvester_small(d1.projected(k1), d2.projected(k2),
                               d1.bhat(k1) * d2.bhat(k2).transpose());
    double diff = 1.0;
    if (y_prev.size() > 0) diff = (y - detail::pad_to(y_prev, k1, k2)).norm() / y.norm();
    out.history.push_back({std::max(k1, k2), diff, detail::seconds_since(t0)});
    y_prev = std::move(y);
    if (diff <= opts.tol) {
      out.converged = true;
      break;
    }
    if (d1.done() && d2.done()) break;
  }
  out.m1 = k1;
  out.m2 = k2;
  out.approx = FactoredVector(d1.basis_cols(k1), y_prev, d2.basis_cols(k2));
  out.basis1 = d1.snapshot();
  out.basis2 = d2.snapshot();
  return out;
}

/// Galerkin solution of (A - z I) x = b in the UNSHIFTED Krylov spaces
/// (K_m(M,b) is invariant under shifts of M). The shift is placed entirely
/// on M1 by default, or split evenly across both factors.
inline FactoredVector shifted_solve(const LinOp& m1op, const Vector& b1, const LinOp& m2op,
                                    const Vector& b2, double z, Index m,
                                    ShiftSplit split = ShiftSplit::full_on_m1,
                                    SpaceKind space = SpaceKind::krylov, double mem_cap = 1e8) {
  detail::BasisDriver d1(m1op, b1, m, space, mem_cap);
  detail::BasisDriver d2(m2op, b2, m, space, mem_cap);
  d1.advance_to(m);
  d2.advance_to(m);
  const Index k1 = d1.dim(), k2 = d2.dim();
  ShiftedSylvesterSolver solver(d1.projected(k1), d2.projected(k2));
  const ComplexMatrix c = (d1.bhat(k1) * d2.bhat(k2).transpose()).cast<Complex>();
  const Complex s1 = split == ShiftSplit::full_on_m1 ? Complex(z) : Complex(z / 2.0);
  const Complex s2 = split == ShiftSplit::full_on_m1 ? Complex(0.0) : Complex(z / 2.0);
  const Matrix y = solver.solve(c, s1, s2).real();
  return FactoredVector(d1.basis_cols(k1), y, d2.basis_cols(k2));
}

}  // namespace kronfab
