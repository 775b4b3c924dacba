#pragma once

#include <chrono>
#include <cmath>

#include "kronfab/smallfun.hpp"

namespace kronfab {

enum class Reorth { full, none };
enum class SpaceKind { krylov, extended };

/// Orthonormal Krylov basis with its projected matrix and the residual
/// coefficient of the recurrence A V = V H + h * next * e_m^T.
struct KrylovBasis {
  Matrix V;                  // n x m, orthonormal columns
  Matrix H;                  // m x m projected matrix
  double resid_coeff = 0.0;  // h; 0 on breakdown or for extended bases
  Vector next;               // v_{m+1}; empty on breakdown
  Index m = 0;
  bool breakdown = false;     // invariant subspace found (approximation exact)
  bool symmetric = false;     // built by a symmetric recurrence; H tridiagonal
  bool ortho_warning = false; // orthogonality loss detected (no-reorth mode)

  /// Leading k x k projected block, symmetrized for symmetric builds.
  Matrix projected(Index k) const {
    Matrix t = H.topLeftCorner(k, k);
    if (symmetric) t = 0.5 * (t + t.transpose());
    return t;
  }
};

struct ConvRecord {
  Index m = 0;
  double value = 0.0;    // error or estimate at dimension m
  double seconds = 0.0;  // cumulative wall time
};
using ConvHistory = std::vector<ConvRecord>;

using ApplyFn = std::function<Vector(const Vector&)>;

namespace detail {

inline constexpr double kBreakdownTol = 1e-14;

/// Incremental Arnoldi/Lanczos driver. Prefix snapshots stay valid as the
/// recurrence advances, which is what structured evaluation relies on.
class ArnoldiProcess {
 public:
  ArnoldiProcess(ApplyFn apply, const Vector& b, Index m_max, Reorth reorth, bool three_term)
      : apply_(std::move(apply)),
        m_max_(m_max),
        reorth_(reorth),
        three_term_(three_term),
        n_(b.size()) {
    const double nb = b.norm();
    if (nb == 0.0) throw std::invalid_argument("krylov: starting vector is zero");
    if (m_max_ < 1) throw std::invalid_argument("krylov: m_max must be >= 1");
    V_.resize(n_, m_max_ + 1);
    H_ = Matrix::Zero(m_max_ + 1, m_max_);
    V_.col(0) = b / nb;
  }

  Index m() const { return m_; }
  bool breakdown() const { return breakdown_; }
  bool done() const { return breakdown_ || m_ >= m_max_; }

  /// One recurrence step; returns false once no further step is possible.
  bool advance() {
    if (done()) return false;
    const Index j = m_;
    Vector w = apply_(V_.col(j));
    const double local = w.norm();
    if (three_term_) {
      if (j > 0) w.noalias() -= H_(j - 1, j) * V_.col(j - 1);
      const double alpha = V_.col(j).dot(w);
      w.noalias() -= alpha * V_.col(j);
      H_(j, j) = alpha;
      if (j > 0) H_(j - 1, j) = H_(j, j - 1);
    } else {
      auto base = V_.leftCols(j + 1);
      Vector c = base.transpose() * w;
      w.noalias() -= base * c;
      if (reorth_ == Reorth::full) {
        Vector c2 = base.transpose() * w;
        w.noalias() -= base * c2;
        c += c2;
      }
      H_.col(j).head(j + 1) = c;
    }
    const double h = w.norm();
    m_ = j + 1;
    if (h <= kBreakdownTol * std::max(local, 1e-300)) {
      breakdown_ = true;
      return false;
    }
    H_(j + 1, j) = h;
    V_.col(j + 1) = w / h;
    return true;
  }

  void advance_until(Index target) {
    while (m_ < target && advance()) {
    }
  }

  KrylovBasis snapshot(Index k = -1, bool symmetric = false) const {
    if (k < 0 || k > m_) k = m_;
    KrylovBasis basis;
    basis.V = V_.leftCols(k);
    basis.H = H_.topLeftCorner(k, k);
    basis.m = k;
    basis.symmetric = symmetric;
    if (symmetric) basis.H = 0.5 * (basis.H + basis.H.transpose().eval());
    const bool has_next = k >= 1 && (k < m_ || !breakdown_);
    if (has_next) {
      basis.resid_coeff = H_(k, k - 1);
      basis.next = V_.col(k);
    }
    basis.breakdown = breakdown_ && k == m_;
    if (three_term_) {
      // Plain three-term recurrence: report orthogonality loss, if any.
      const Matrix g = basis.V.transpose() * basis.V;
      basis.ortho_warning = (g - Matrix::Identity(k, k)).cwiseAbs().maxCoeff() > 1e-8;
    }
    return basis;
  }

  const Matrix& V_storage() const { return V_; }
  const Matrix& H_storage() const { return H_; }

 private:
  ApplyFn apply_;
  Index m_max_;
  Reorth reorth_;
  bool three_term_;
  Index n_;
  Matrix V_, H_;
  Index m_ = 0;
  bool breakdown_ = false;
};

/// Extended Krylov driver: blocks alternate A-images and A^{-1}-images, the
/// projected matrix is formed explicitly as V^T A V.
class ExtendedProcess {
 public:
  ExtendedProcess(ApplyFn apply, ApplyFn solve, const Vector& b, Index max_blocks)
      : apply_(std::move(apply)), solve_(std::move(solve)), max_blocks_(max_blocks), n_(b.size()) {
    if (b.norm() == 0.0) throw std::invalid_argument("extended_krylov: starting vector is zero");
    if (max_blocks_ < 1) throw std::invalid_argument("extended_krylov: m_blocks must be >= 1");
    V_.resize(n_, 2 * max_blocks_);
    AV_.resize(n_, 2 * max_blocks_);
    push(b);
    push(solve_(b));
    blocks_ = 1;
  }

  Index blocks() const { return blocks_; }
  Index cols() const { return cols_; }
  bool breakdown() const { return breakdown_; }
  bool done() const { return breakdown_ || blocks_ >= max_blocks_; }

  bool advance() {
    if (done()) return false;
    const Index c = cols_;
    push(apply_(V_.col(c - 2)));
    push(solve_(V_.col(c - 1)));
    ++blocks_;
    return !breakdown_;
  }

  void advance_until(Index target_blocks) {
    while (blocks_ < target_blocks && advance()) {
    }
  }

  KrylovBasis snapshot(Index k_cols = -1) const {
    if (k_cols < 0 || k_cols > cols_) k_cols = cols_;
    KrylovBasis basis;
    basis.V = V_.leftCols(k_cols);
    basis.H = V_.leftCols(k_cols).transpose() * AV_.leftCols(k_cols);
    basis.m = k_cols;
    basis.breakdown = breakdown_;
    return basis;
  }

 private:
  void push(Vector w) {
    if (breakdown_) return;
    const double local = w.norm();
    auto base = V_.leftCols(cols_);
    if (cols_ > 0) {
      Vector c = base.transpose() * w;
      w.noalias() -= base * c;
      Vector c2 = base.transpose() * w;
      w.noalias() -= base * c2;
    }
    const double h = w.norm();
    if (h <= kBreakdownTol * std::max(local, 1e-300)) {
      breakdown_ = true;
      return;
    }
    V_.col(cols_) = w / h;
    AV_.col(cols_) = apply_(V_.col(cols_));
    ++cols_;
  }

  ApplyFn apply_, solve_;
  Index max_blocks_;
  Index n_;
  Matrix V_, AV_;
  Index cols_ = 0;
  Index blocks_ = 0;
  bool breakdown_ = false;
};

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

/// Orthonormal basis of K_m(A, b) via the Arnoldi recurrence. Stops early with
/// the breakdown flag when an invariant subspace is found (the projected
/// approximation is then exact).
inline KrylovBasis arnoldi(const ApplyFn& apply, const Vector& b, Index m_max,
                           Reorth reorth = Reorth::full) {
  detail::ArnoldiProcess p(apply, b, m_max, reorth, false);
  p.advance_until(m_max);
  return p.snapshot();
}

/// Symmetric specialization: three-term recurrence, full reorthogonalization
/// by default. With reorthogonalization off, orthogonality loss beyond 1e-8
/// sets ortho_warning on the returned basis.
inline KrylovBasis lanczos(const ApplyFn& apply, const Vector& b, Index m_max,
                           Reorth reorth = Reorth::full) {
  detail::ArnoldiProcess p(apply, b, m_max, reorth, reorth == Reorth::none);
  p.advance_until(m_max);
  return p.snapshot(-1, true);
}

/// Basis of K_m(A,b) + K_m(A^{-1}, A^{-1}b), dimension 2*m_blocks; the
/// projected matrix is V^T A V. solve must apply A^{-1} accurately.
inline KrylovBasis extended_krylov(const ApplyFn& apply, const ApplyFn& solve, const Vector& b,
                                   Index m_blocks) {
  detail::ExtendedProcess p(apply, solve, b, m_blocks);
  p.advance_until(m_blocks);
  KrylovBasis basis = p.snapshot();
  basis.symmetric = false;
  return basis;
}

struct StandardOptions {
  Index stride = 4;           // record interval for the history
  double mem_cap = 1e8;       // max scalars allowed for the basis (N*m)
  Reorth reorth = Reorth::full;
};

struct StandardResult {
  Vector x;
  ConvHistory history;  // relative iterate differences at each recorded m
  KrylovBasis basis;
};

/// Unstructured baseline x_m = V_m f(H_m) V_m^T b on the full operator.
inline StandardResult standard_fAb(const KronSumOp& op, const Vector& b,
                                   const ScalarFunctionSpec& f, Index m,
                                   const StandardOptions& opts = {}) {
  const double need = static_cast<double>(op.dim()) * static_cast<double>(m + 1);
  if (need > opts.mem_cap)
    throw std::runtime_error(
        "standard_fAb: basis storage N*m = " + std::to_string(static_cast<long long>(need)) +
        " scalars exceeds the memory cap (" + std::to_string(static_cast<long long>(opts.mem_cap)) +
        "); this is exactly where the factored evaluation (structured_fAb) should be used instead");
  const auto t0 = std::chrono::steady_clock::now();
  const bool sym = op.symmetric();
  detail::ArnoldiProcess proc([&op](const Vector& v) { return op.apply(v); }, b, m, opts.reorth,
                              sym && opts.reorth == Reorth::none);
  const double nb = b.norm();
  StandardResult out;
  Vector coeff_prev;
  Index recorded_m = 0;
  for (Index target = opts.stride; recorded_m < m; target += opts.stride) {
    proc.advance_until(std::min(target, m));
    const Index k = proc.m();
    if (k == recorded_m) break;  // breakdown; iterates frozen from here on
    recorded_m = k;
    KrylovBasis snap = proc.snapshot(k, sym);
    Vector e1 = Vector::Zero(k);
    e1[0] = nb;
    Vector coeff = funm(snap.projected(k), f) * e1;
    double diff;
    if (coeff_prev.size() == 0) {
      diff = 1.0;
    } else {
      Vector padded = Vector::Zero(k);
      padded.head(coeff_prev.size()) = coeff_prev;
      diff = (coeff - padded).norm() / coeff.norm();
    }
    out.history.push_back({k, diff, detail::seconds_since(t0)});
    coeff_prev = coeff;
    if (proc.breakdown()) break;
  }
  out.basis = proc.snapshot(-1, sym);
  Vector e1 = Vector::Zero(out.basis.m);
  e1[0] = nb;
  out.x = out.basis.V * (funm(out.basis.projected(out.basis.m), f) * e1);
  return out;
}

}  // namespace kronfab
