#pragma once

#include <algorithm>
#include <optional>

#include "kronfab/krylov.hpp"

namespace kronfab {

// ---------------------------------------------------------------------------
// FactoredVector: x = vec(left * mid * right^T), never materialized unless
// asked. All norms and differences are computed from small Gram matrices.
// ---------------------------------------------------------------------------

class FactoredVector {
 public:
  FactoredVector() = default;
  FactoredVector(Matrix left, Matrix mid, Matrix right)
      : left_(std::move(left)), mid_(std::move(mid)), right_(std::move(right)) {
    if (left_.cols() != mid_.rows() || right_.cols() != mid_.cols())
      throw std::invalid_argument("FactoredVector: factor dimensions do not chain");
  }

  /// Rank-one vec(l * r^T).
  static FactoredVector outer(const Vector& l, const Vector& r) {
    return FactoredVector(l, Matrix::Ones(1, 1), r);
  }

  static FactoredVector zero(Index n1, Index n2) {
    return FactoredVector(Matrix::Zero(n1, 1), Matrix::Zero(1, 1), Matrix::Zero(n2, 1));
  }

  const Matrix& left() const { return left_; }
  const Matrix& mid() const { return mid_; }
  const Matrix& right() const { return right_; }
  Index rows1() const { return left_.rows(); }
  Index rows2() const { return right_.rows(); }
  Index size() const { return rows1() * rows2(); }
  bool empty() const { return left_.size() == 0; }

  Vector materialize() const {
    Matrix x = left_ * mid_ * right_.transpose();
    return Eigen::Map<const Vector>(x.data(), x.size());
  }

  double norm() const {
    if (empty()) return 0.0;
    const Matrix gl = left_.transpose() * left_;
    const Matrix gr = right_.transpose() * right_;
    const double sq = ((gl * mid_).cwiseProduct(mid_ * gr)).sum();
    return std::sqrt(std::max(sq, 0.0));
  }

  FactoredVector scaled(double a) const { return FactoredVector(left_, a * mid_, right_); }

  /// Single entry of the materialized vector (vec index j*n1 + i).
  double entry(Index i, Index j) const {
    return left_.row(i) * mid_ * right_.row(j).transpose();
  }

 private:
  Matrix left_, mid_, right_;
};

/// Relative difference ||cur - prev|| / ||cur|| via stacked Gram matrices,
/// no materialization. prev may be empty (treated as zero).
inline double diff_estimate(const FactoredVector& current, const FactoredVector& previous) {
  const double nc = current.norm();
  if (nc == 0.0) throw std::invalid_argument("diff_estimate: current iterate has zero norm");
  if (previous.empty()) return 1.0;
  if (current.rows1() != previous.rows1() || current.rows2() != previous.rows2())
    throw std::invalid_argument("diff_estimate: incompatible outer dimensions");
  const Index kc = current.left().cols(), kp = previous.left().cols();
  const Index rc = current.right().cols(), rp = previous.right().cols();
  Matrix l(current.rows1(), kc + kp), r(current.rows2(), rc + rp);
  l << current.left(), previous.left();
  r << current.right(), previous.right();
  Matrix mid = Matrix::Zero(kc + kp, rc + rp);
  mid.topLeftCorner(kc, rc) = current.mid();
  mid.bottomRightCorner(kp, rp) = -previous.mid();
  return FactoredVector(std::move(l), std::move(mid), std::move(r)).norm() / nc;
}

// ---------------------------------------------------------------------------
// Projected evaluation (the m x m core of the structured approximation)
// ---------------------------------------------------------------------------

enum class EvalPath { diag_sym, diag_general, explicit_kron, exp_fast, sincos_fast, galerkin };

inline const char* to_string(EvalPath p) {
  switch (p) {
    case EvalPath::diag_sym: return "diag";
    case EvalPath::diag_general: return "diag-general";
    case EvalPath::explicit_kron: return "explicit";
    case EvalPath::exp_fast: return "exp-fast";
    case EvalPath::sincos_fast: return "sincos-fast";
    case EvalPath::galerkin: return "galerkin";
  }
  return "?";
}

struct StructuredOptions {
  Index stride = 4;           // evaluation interval (matches the table stride)
  double tol = 1e-8;          // relative iterate-difference stopping tolerance
  SpaceKind space = SpaceKind::krylov;
  Index m_max2 = -1;          // cap for the second factor dimension; -1 = same
  Index explicit_gate = 60;   // explicit f(T_m) fallback allowed for m <= gate
  bool force_explicit = false;
  double cond_gate = 1e8;     // eigenvector conditioning gate for the diag path
  double mem_cap = 1e8;       // scalars allowed per factor basis
};

namespace detail {

/// Z for x = vec(Q Z P^T) through the eigendecompositions of T1 and T2:
/// G = f(lambda_i + theta_j) .* (X^{-1} b1h b2h^T Y^{-T}), Z = X G Y^T.
inline Matrix eval_projected_diag_sym(const Matrix& t1, const Matrix& t2, const Vector& b1h,
                                      const Vector& b2h, const ScalarFunctionSpec& f) {
  Eigen::SelfAdjointEigenSolver<Matrix> e1(t1), e2(t2);
  const Vector u = e1.eigenvectors().transpose() * b1h;
  const Vector w = e2.eigenvectors().transpose() * b2h;
  Matrix g(u.size(), w.size());
  for (Index j = 0; j < w.size(); ++j)
    for (Index i = 0; i < u.size(); ++i)
      g(i, j) = f(e1.eigenvalues()[i] + e2.eigenvalues()[j]) * u[i] * w[j];
  return e1.eigenvectors() * g * e2.eigenvectors().transpose();
}

inline Matrix eval_projected_diag_general(const SpectralDecomp& d1, const SpectralDecomp& d2,
                                          const Vector& b1h, const Vector& b2h,
                                          const ScalarFunctionSpec& f) {
  const ComplexVector u = d1.inv_vectors * b1h.cast<Complex>();
  const ComplexVector w = d2.inv_vectors * b2h.cast<Complex>();
  ComplexMatrix g(u.size(), w.size());
  for (Index j = 0; j < w.size(); ++j)
    for (Index i = 0; i < u.size(); ++i)
      g(i, j) = f(d1.values[i] + d2.values[j]) * u[i] * w[j];
  return (d1.vectors * g * d2.vectors.transpose()).real();
}

inline Matrix eval_projected_explicit(const Matrix& t1, const Matrix& t2, const Vector& b1h,
                                      const Vector& b2h, const ScalarFunctionSpec& f) {
  const Matrix tm = form_kron_sum(t1, t2);
  const Vector z = funm(tm, f, 1e14) * vec(b1h * b2h.transpose());
  return unvec(z, t1.rows(), t2.rows());
}

}  // namespace detail

/// Dispatch between the diagonalization path (O(m^3)) and the explicit
/// f(T2 (x) I + I (x) T1) fallback (O(m^6), gated). Both routes agree where
/// both run.
inline Matrix eval_projected(const Matrix& t1, const Matrix& t2, const Vector& b1h,
                             const Vector& b2h, const ScalarFunctionSpec& f,
                             EvalPath* path_out = nullptr, Index explicit_gate = 60,
                             double cond_gate = 1e8, bool force_explicit = false) {
  const Index m1 = t1.rows(), m2 = t2.rows();
  const Index mbig = std::max(m1, m2);
  const bool explicit_ok = mbig <= explicit_gate;
  if (force_explicit) {
    if (!explicit_ok)
      throw std::runtime_error("eval_projected: explicit path requested beyond its size gate (m = " +
                               std::to_string(mbig) + ")");
    if (path_out) *path_out = EvalPath::explicit_kron;
    return detail::eval_projected_explicit(t1, t2, b1h, b2h, f);
  }
  if (is_symmetric(t1, 1e-12) && is_symmetric(t2, 1e-12)) {
    if (path_out) *path_out = EvalPath::diag_sym;
    return detail::eval_projected_diag_sym(0.5 * (t1 + t1.transpose()), 0.5 * (t2 + t2.transpose()),
                                           b1h, b2h, f);
  }
  std::string diag_failure;
  if (f.has_complex()) {
    try {
      SpectralDecomp d1 = eigen_general(t1);
      SpectralDecomp d2 = eigen_general(t2);
      if (std::max(d1.cond, d2.cond) <= cond_gate) {
        if (path_out) *path_out = EvalPath::diag_general;
        return detail::eval_projected_diag_general(d1, d2, b1h, b2h, f);
      }
      diag_failure = "eigenvector conditioning exceeds the gate";
    } catch (const std::runtime_error& e) {
      diag_failure = e.what();
    }
  } else {
    diag_failure = "function has no complex evaluator";
  }
  if (explicit_ok) {
    if (path_out) *path_out = EvalPath::explicit_kron;
    return detail::eval_projected_explicit(t1, t2, b1h, b2h, f);
  }
  throw std::runtime_error("eval_projected: diagonalization path unavailable (" + diag_failure +
                           ") and m = " + std::to_string(mbig) + " exceeds the explicit-path gate");
}

// ---------------------------------------------------------------------------
// Basis driver shared by the structured evaluations
// ---------------------------------------------------------------------------

namespace detail {

class BasisDriver {
 public:
  BasisDriver(const LinOp& m, const Vector& b, Index m_max, SpaceKind space, double mem_cap)
      : b_(b), bnorm_(b.norm()), space_(space), sym_(m.symmetric()) {
    if (static_cast<double>(m.rows()) * static_cast<double>(m_max + 1) > mem_cap)
      throw std::runtime_error("structured basis storage exceeds the memory cap");
    if (space == SpaceKind::krylov) {
      arn_.emplace([m](const Vector& v) { return m.apply(v); }, b, m_max, Reorth::full, false);
    } else {
      if (!m.has_solve())
        throw std::invalid_argument("extended Krylov space requires an operator with a direct solve");
      ext_.emplace([m](const Vector& v) { return m.apply(v); },
                   [m](const Vector& v) { return m.solve(v); }, b,
                   std::max<Index>(1, (m_max + 1) / 2));
    }
  }

  Index dim() const { return arn_ ? arn_->m() : ext_->cols(); }
  bool done() const { return arn_ ? arn_->done() : ext_->done(); }
  bool breakdown() const { return arn_ ? arn_->breakdown() : ext_->breakdown(); }
  bool symmetric() const { return sym_; }

  void advance_to(Index target_dim) {
    if (arn_) {
      arn_->advance_until(target_dim);
    } else {
      ext_->advance_until((target_dim + 1) / 2);
    }
  }

  Matrix projected(Index k) const {
    if (arn_) {
      Matrix t = arn_->H_storage().topLeftCorner(k, k);
      if (sym_) t = 0.5 * (t + t.transpose().eval());
      return t;
    }
    KrylovBasis snap = ext_->snapshot(k);
    if (sym_) return 0.5 * (snap.H + snap.H.transpose());
    return snap.H;
  }

  Vector bhat(Index k) const {
    if (arn_) {
      Vector e = Vector::Zero(k);
      e[0] = bnorm_;
      return e;
    }
    return ext_->snapshot(k).V.transpose() * b_;
  }

  Matrix basis_cols(Index k) const {
    if (arn_) return arn_->V_storage().leftCols(k);
    return ext_->snapshot(k).V;
  }

  KrylovBasis snapshot(Index k = -1) const {
    if (arn_) return arn_->snapshot(k, sym_);
    KrylovBasis basis = ext_->snapshot(k);
    if (sym_) basis.H = 0.5 * (basis.H + basis.H.transpose().eval());
    return basis;
  }

 private:
  Vector b_;
  double bnorm_;
  SpaceKind space_;
  bool sym_;
  std::optional<ArnoldiProcess> arn_;
  std::optional<ExtendedProcess> ext_;
};

inline Matrix pad_to(const Matrix& z, Index r, Index c) {
  Matrix out = Matrix::Zero(r, c);
  out.topLeftCorner(z.rows(), z.cols()) = z;
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Structured approximation x_m = vec(Q_m Z P_m^T) for general f
// ---------------------------------------------------------------------------

struct StructuredResult {
  FactoredVector approx;
  ConvHistory history;   // relative iterate differences, exact in projected coordinates
  KrylovBasis basis1, basis2;
  EvalPath path = EvalPath::diag_sym;
  bool converged = false;
  Index m1 = 0, m2 = 0;  // projected dimensions actually used
};

/// Structure-exploiting approximation of f(M2 (x) I + I (x) M1) vec(b1 b2^T):
/// two small Krylov processes, one per factor, evaluated through f of the
/// projected Kronecker sum. Stops when the relative iterate difference drops
/// below tol or m_max is reached (best iterate returned with converged=false).
inline StructuredResult structured_fAb(const LinOp& m1op, const Vector& b1, const LinOp& m2op,
                                       const Vector& b2, const ScalarFunctionSpec& f, Index m_max,
                                       const StructuredOptions& opts = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  detail::BasisDriver d1(m1op, b1, m_max, opts.space, opts.mem_cap);
  const Index m_max2 = opts.m_max2 < 0 ? m_max : opts.m_max2;
  detail::BasisDriver d2(m2op, b2, m_max2, opts.space, opts.mem_cap);

  StructuredResult out;
  Matrix z_prev;
  Index k1 = 0, k2 = 0;
  for (Index target = opts.stride;; target += opts.stride) {
    d1.advance_to(std::min(target, m_max));
    d2.advance_to(std::min(target, m_max2));
    const Index n1 = d1.dim(), n2 = d2.dim();
    if (n1 == k1 && n2 == k2) break;  // no progress possible
    k1 = n1;
    k2 = n2;
    Matrix z = eval_projected(d1.projected(k1), d2.projected(k2), d1.bhat(k1), d2.bhat(k2), f,
                              &out.path, opts.explicit_gate, opts.cond_gate, opts.force_explicit);
    double diff = 1.0;
    if (z_prev.size() > 0)
      diff = (z - detail::pad_to(z_prev, k1, k2)).norm() / z.norm();
    out.history.push_back({std::max(k1, k2), diff, detail::seconds_since(t0)});
    z_prev = std::move(z);
    if (diff <= opts.tol) {
      out.converged = true;
      break;
    }
    if (d1.done() && d2.done()) break;
  }
  out.m1 = k1;
  out.m2 = k2;
  out.approx = FactoredVector(d1.basis_cols(k1), z_prev, d2.basis_cols(k2));
  out.basis1 = d1.snapshot();
  out.basis2 = d2.snapshot();
  return out;
}

// ---------------------------------------------------------------------------
// Exponential fast path: exp(T2 (+) T1) = exp(T2) (x) exp(T1) turns the
// evaluation into two independent small exponentials; the approximation is
// rank one and no m^2-sized object is ever formed.
// ---------------------------------------------------------------------------

inline StructuredResult exp_structured(const LinOp& m1op, const Vector& b1, const LinOp& m2op,
                                       const Vector& b2, Index m_max,
                                       const StructuredOptions& opts = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  detail::BasisDriver d1(m1op, b1, m_max, opts.space, opts.mem_cap);
  const Index m_max2 = opts.m_max2 < 0 ? m_max : opts.m_max2;
  detail::BasisDriver d2(m2op, b2, m_max2, opts.space, opts.mem_cap);

  StructuredResult out;
  out.path = EvalPath::exp_fast;
  Vector y1, y2, y1_prev, y2_prev;
  Index k1 = 0, k2 = 0;
  for (Index target = opts.stride;; target += opts.stride) {
    d1.advance_to(std::min(target, m_max));
    d2.advance_to(std::min(target, m_max2));
    if (d1.dim() == k1 && d2.dim() == k2) break;
    k1 = d1.dim();
    k2 = d2.dim();
    y1 = expm(d1.projected(k1)) * d1.bhat(k1);
    y2 = expm(d2.projected(k2)) * d2.bhat(k2);
    double diff = 1.0;
    if (y1_prev.size() > 0) {
      Matrix cur = y1 * y2.transpose();
      Matrix prev = detail::pad_to(y1_prev * y2_prev.transpose(), k1, k2);
      diff = (cur - prev).norm() / cur.norm();
    }
    out.history.push_back({std::max(k1, k2), diff, detail::seconds_since(t0)});
    y1_prev = y1;
    y2_prev = y2;
    if (diff <= opts.tol) {
      out.converged = true;
      break;
    }
    if (d1.done() && d2.done()) break;
  }
  out.m1 = k1;
  out.m2 = k2;
  out.approx = FactoredVector::outer(d1.basis_cols(k1) * y1, d2.basis_cols(k2) * y2);
  out.basis1 = d1.snapshot();
  out.basis2 = d2.snapshot();
  return out;
}

// ---------------------------------------------------------------------------
// sin/cos fast path. With A = M2 (x) I + I (x) M1:
//   sin(A) vec(B) = vec(sin(M1) B cos(M2)^T + cos(M1) B sin(M2)^T)
//   cos(A) vec(B) = vec(cos(M1) B cos(M2)^T - sin(M1) B sin(M2)^T)
// Each result is rank two (rank one per term).
// ---------------------------------------------------------------------------

enum class SinCosSelect { sin, cos, both };

struct SinCosResult {
  StructuredResult sin;
  StructuredResult cos;
};

namespace detail {

inline void sincos_of_projected(const Matrix& t, const Vector& bhat, Vector& ys, Vector& yc) {
  if (is_symmetric(t, 1e-12)) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (t + t.transpose()));
    const Vector u = es.eigenvectors().transpose() * bhat;
    ys = es.eigenvectors() * (es.eigenvalues().array().sin().matrix().asDiagonal() * u);
    yc = es.eigenvectors() * (es.eigenvalues().array().cos().matrix().asDiagonal() * u);
    return;
  }
  const SpectralDecomp d = eigen_general(t);
  const ComplexVector u = d.inv_vectors * bhat.cast<Complex>();
  ComplexVector fs(u.size()), fc(u.size());
  for (Index i = 0; i < u.size(); ++i) {
    fs[i] = std::sin(d.values[i]) * u[i];
    fc[i] = std::cos(d.values[i]) * u[i];
  }
  ys = (d.vectors * fs).real();
  yc = (d.vectors * fc).real();
}

}  // namespace detail

inline SinCosResult sincos_structured(const LinOp& m1op, const Vector& b1, const LinOp& m2op,
                                      const Vector& b2, Index m_max,
                                      SinCosSelect which = SinCosSelect::both,
                                      const StructuredOptions& opts = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  detail::BasisDriver d1(m1op, b1, m_max, opts.space, opts.mem_cap);
  const Index m_max2 = opts.m_max2 < 0 ? m_max : opts.m_max2;
  detail::BasisDriver d2(m2op, b2, m_max2, opts.space, opts.mem_cap);

  SinCosResult out;
  out.sin.path = out.cos.path = EvalPath::sincos_fast;
  Vector s1, c1, s2, c2;
  Matrix sin_prev, cos_prev;
  Index k1 = 0, k2 = 0;
  bool conv = false;
  for (Index target = opts.stride;; target += opts.stride) {
    d1.advance_to(std::min(target, m_max));
    d2.advance_to(std::min(target, m_max2));
    if (d1.dim() == k1 && d2.dim() == k2) break;
    k1 = d1.dim();
    k2 = d2.dim();
    detail::sincos_of_projected(d1.projected(k1), d1.bhat(k1), s1, c1);
    detail::sincos_of_projected(d2.projected(k2), d2.bhat(k2), s2, c2);
    const Matrix sin_cur = s1 * c2.transpose() + c1 * s2.transpose();
    const Matrix cos_cur = c1 * c2.transpose() - s1 * s2.transpose();
    double dsin = 1.0, dcos = 1.0;
    if (sin_prev.size() > 0) {
      dsin = (sin_cur - detail::pad_to(sin_prev, k1, k2)).norm() / sin_cur.norm();
      dcos = (cos_cur - detail::pad_to(cos_prev, k1, k2)).norm() / cos_cur.norm();
    }
    const double t_el = detail::seconds_since(t0);
    out.sin.history.push_back({std::max(k1, k2), dsin, t_el});
    out.cos.history.push_back({std::max(k1, k2), dcos, t_el});
    sin_prev = sin_cur;
    cos_prev = cos_cur;
    const double drive = which == SinCosSelect::sin ? dsin
                       : which == SinCosSelect::cos ? dcos
                                                    : std::max(dsin, dcos);
    if (drive <= opts.tol) {
      conv = true;
      break;
    }
    if (d1.done() && d2.done()) break;
  }
  const Matrix v1 = d1.basis_cols(k1), v2 = d2.basis_cols(k2);
  Matrix sin_left(v1.rows(), 2), sin_right(v2.rows(), 2);
  sin_left << v1 * s1, v1 * c1;
  sin_right << v2 * c2, v2 * s2;
  out.sin.approx = FactoredVector(sin_left, Matrix::Identity(2, 2), sin_right);
  Matrix cos_left(v1.rows(), 2), cos_right(v2.rows(), 2);
  cos_left << v1 * c1, v1 * s1;
  cos_right << v2 * c2, v2 * s2;
  Matrix cos_mid = Matrix::Identity(2, 2);
  cos_mid(1, 1) = -1.0;
  out.cos.approx = FactoredVector(cos_left, cos_mid, cos_right);
  out.sin.converged = out.cos.converged = conv;
  out.sin.m1 = out.cos.m1 = k1;
  out.sin.m2 = out.cos.m2 = k2;
  out.sin.basis1 = out.cos.basis1 = d1.snapshot();
  out.sin.basis2 = out.cos.basis2 = d2.snapshot();
  return out;
}

// ---------------------------------------------------------------------------
// Multi-term Kronecker sums M_1 (+) M_2 (+) ... (+) M_k (M_1 leftmost),
// reduced recursively to the two-term algorithm. b = b_1 (x) ... (x) b_k.
// ---------------------------------------------------------------------------

/// Kronecker product of vectors, (u (x) v)[i*len(v)+j] = u_i v_j.
inline Vector kron_vec(const Vector& u, const Vector& v) {
  Vector out(u.size() * v.size());
  for (Index i = 0; i < u.size(); ++i) out.segment(i * v.size(), v.size()) = u[i] * v;
  return out;
}

namespace detail {

inline LinOp chain_kron_sum_op(const std::vector<std::pair<LinOp, Vector>>& factors, std::size_t i) {
  if (i + 1 == factors.size()) return factors[i].first;
  LinOp rest = chain_kron_sum_op(factors, i + 1);
  auto op = std::make_shared<KronSumOp>(rest, factors[i].first);
  const bool sym = op->symmetric();
  return LinOp::from_apply(op->dim(), [op](const Vector& v) { return op->apply(v); }, sym);
}

inline Vector chain_kron_vec(const std::vector<std::pair<LinOp, Vector>>& factors, std::size_t i) {
  if (i + 1 == factors.size()) return factors[i].second;
  return kron_vec(factors[i].second, chain_kron_vec(factors, i + 1));
}

}  // namespace detail

/// f of a k-term Kronecker sum applied to the outer product of the b_i.
/// For f = exp, per-factor exponentials are used throughout; otherwise the
/// trailing sum M_2 (+) ... (+) M_k is treated as one matrix-free operator
/// and the two-term algorithm runs on the pair.
inline StructuredResult multiterm_structured(const std::vector<std::pair<LinOp, Vector>>& factors,
                                             const ScalarFunctionSpec& f, Index m_max,
                                             const StructuredOptions& opts = {}) {
  if (factors.size() < 2)
    throw std::invalid_argument("multiterm_structured: need at least two factors");
  const auto t0 = std::chrono::steady_clock::now();

  if (f.kind() == FunKind::exp) {
    // exp(M_1 (+) ... (+) M_k) b = (exp(M_1) b_1) (x) ... (x) (exp(M_k) b_k)
    std::vector<detail::BasisDriver> drivers;
    drivers.reserve(factors.size());
    for (const auto& [op, b] : factors) drivers.emplace_back(op, b, m_max, opts.space, opts.mem_cap);
    StructuredResult out;
    out.path = EvalPath::exp_fast;
    const std::size_t k = factors.size();
    std::vector<Vector> y(k), y_prev;
    std::vector<Index> dims(k, 0);
    for (Index target = opts.stride;; target += opts.stride) {
      bool progressed = false;
      for (std::size_t i = 0; i < k; ++i) {
        drivers[i].advance_to(std::min(target, m_max));
        if (drivers[i].dim() != dims[i]) progressed = true;
        dims[i] = drivers[i].dim();
      }
      if (!progressed) break;
      for (std::size_t i = 0; i < k; ++i) {
        const Index di = dims[i];
        y[i] = (f.negated() ? expm(Matrix(-drivers[i].projected(di)))
                            : expm(drivers[i].projected(di))) *
               drivers[i].bhat(di);
      }
      double diff = 1.0;
      if (!y_prev.empty()) {
        // Telescoping estimate of the k-fold outer-product difference.
        double est = 0.0, cur_norm = 1.0;
        for (std::size_t i = 0; i < k; ++i) cur_norm *= y[i].norm();
        for (std::size_t i = 0; i < k; ++i) {
          double term = 1.0;
          for (std::size_t j = 0; j < i; ++j) term *= y[j].norm();
          Vector padded = Vector::Zero(y[i].size());
          padded.head(y_prev[i].size()) = y_prev[i];
          term *= (y[i] - padded).norm();
          for (std::size_t j = i + 1; j < k; ++j) term *= y_prev[j].norm();
          est += term;
        }
        diff = est / cur_norm;
      }
      out.history.push_back({*std::max_element(dims.begin(), dims.end()), diff,
                             detail::seconds_since(t0)});
      y_prev = y;
      if (diff <= opts.tol) {
        out.converged = true;
        break;
      }
      bool all_done = true;
      for (const auto& d : drivers) all_done &= d.done();
      if (all_done) break;
    }
    std::vector<Vector> approx(k);
    for (std::size_t i = 0; i < k; ++i) approx[i] = drivers[i].basis_cols(dims[i]) * y[i];
    Vector tail = approx[k - 1];
    for (std::size_t i = k - 1; i-- > 1;) tail = kron_vec(approx[i], tail);
    out.approx = FactoredVector::outer(tail, approx[0]);
    out.m1 = *std::max_element(dims.begin(), dims.end());
    out.m2 = dims[0];
    out.basis1 = drivers.back().snapshot();
    out.basis2 = drivers.front().snapshot();
    return out;
  }

  if (opts.space == SpaceKind::extended)
    throw std::invalid_argument(
        "multiterm_structured: extended space is unavailable for the matrix-free trailing operator");
  LinOp trailing = detail::chain_kron_sum_op(factors, 1);
  const Vector b_tail = detail::chain_kron_vec(factors, 1);
  if (static_cast<double>(trailing.rows()) * static_cast<double>(m_max + 1) > opts.mem_cap)
    throw std::runtime_error("multiterm_structured: recursive right operand exceeds the memory cap");
  return structured_fAb(trailing, b_tail, factors[0].first, factors[0].second, f, m_max, opts);
}

// ---------------------------------------------------------------------------
// Full-dimension reference evaluation (benchmark/validation oracle): factor
// eigendecompositions at full size, no Krylov projection involved.
// ---------------------------------------------------------------------------

inline FactoredVector dense_reference_fAb(const Matrix& m1, const Matrix& m2, const Vector& b1,
                                          const Vector& b2, const ScalarFunctionSpec& f) {
  if (f.kind() == FunKind::exp) {
    const Vector x1 = (f.negated() ? expm(Matrix(-m1)) : expm(m1)) * b1;
    const Vector x2 = (f.negated() ? expm(Matrix(-m2)) : expm(m2)) * b2;
    return FactoredVector::outer(x1, x2);
  }
  Matrix z = eval_projected(m1, m2, b1, b2, f, nullptr, 0, 1e14, false);
  return FactoredVector(Matrix::Identity(m1.rows(), m1.rows()), std::move(z),
                        Matrix::Identity(m2.rows(), m2.rows()));
}

}  // namespace kronfab
