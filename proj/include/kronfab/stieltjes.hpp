#pragma once

#include <atomic>
#include <cstdlib>
#include <numbers>
#include <thread>

#include "kronfab/sylv.hpp"

namespace kronfab {

// ---------------------------------------------------------------------------
// Stieltjes measures
// ---------------------------------------------------------------------------

/// Representation f(x) = int e^{-tau x} d(alpha)(tau) (Laplace kinds) or
/// f(x) = int d(gamma)(omega)/(x - omega) over (-inf, cutoff] (Cauchy kinds).
struct StieltjesMeasure {
  enum class Kind {
    laplace_point_mass,   // alpha jumps by 1 at tau0
    laplace_gamma_density,// d alpha = coeff * tau^{-gamma} d tau, gamma in [0,1)
    laplace_ramp,         // d alpha = d tau on [0, ramp_end]
    laplace_custom,       // d alpha = density(tau) d tau on [a, b] (b may be inf)
    cauchy_density        // d gamma = density(omega) d omega on (-inf, cutoff]
  };

  Kind kind = Kind::laplace_gamma_density;
  double tau0 = 1.0;        // point mass location
  double gamma = 0.0;       // density exponent
  double coeff = 1.0;       // density scale
  double ramp_end = 1.0;
  double support_lo = 0.0, support_hi = std::numeric_limits<double>::infinity();
  double cutoff = 0.0;      // Cauchy support (-inf, cutoff]
  bool sqrt_singular = false;  // inverse-square-root behavior at the Cauchy cutoff
  std::function<double(double)> density;      // custom densities
  std::function<double(double)> closed_form;  // f itself, when known, for validation

  bool laplace() const { return kind != Kind::cauchy_density; }

  static StieltjesMeasure laplace_point_mass(double tau0) {
    StieltjesMeasure m;
    m.kind = Kind::laplace_point_mass;
    m.tau0 = tau0;
    m.closed_form = [tau0](double x) { return std::exp(-tau0 * x); };
    return m;
  }

  static StieltjesMeasure laplace_gamma_density(double gamma, double coeff = 1.0) {
    if (gamma < 0.0 || gamma >= 1.0)
      throw std::invalid_argument(
          "laplace_gamma_density: tau^{-gamma} is a divergent measure unless 0 <= gamma < 1");
    StieltjesMeasure m;
    m.kind = Kind::laplace_gamma_density;
    m.gamma = gamma;
    m.coeff = coeff;
    m.closed_form = [gamma, coeff](double x) {
      return coeff * std::tgamma(1.0 - gamma) * std::pow(x, gamma - 1.0);
    };
    return m;
  }

  /// f_1(x) = 1/x.
  static StieltjesMeasure laplace_inverse() { return laplace_gamma_density(0.0, 1.0); }

  /// f(x) = x^{-1/2} with density tau^{-1/2}/sqrt(pi).
  static StieltjesMeasure laplace_inv_sqrt() {
    return laplace_gamma_density(0.5, 1.0 / std::sqrt(std::numbers::pi));
  }

  /// f_3-style ramp: d alpha = d tau on [0, T], f(x) = (1 - e^{-xT})/x.
  static StieltjesMeasure laplace_ramp(double t_end = 1.0) {
    StieltjesMeasure m;
    m.kind = Kind::laplace_ramp;
    m.ramp_end = t_end;
    m.closed_form = [t_end](double x) { return -std::expm1(-x * t_end) / x; };
    return m;
  }

  static StieltjesMeasure laplace_custom(std::function<double(double)> w, double lo, double hi,
                                         std::function<double(double)> closed = nullptr) {
    StieltjesMeasure m;
    m.kind = Kind::laplace_custom;
    m.density = std::move(w);
    m.support_lo = lo;
    m.support_hi = hi;
    m.closed_form = std::move(closed);
    return m;
  }

  /// z^{-1/2} = int_{-inf}^0 (z - w)^{-1} / (pi sqrt(-w)) dw.
  static StieltjesMeasure cauchy_inv_sqrt() {
    StieltjesMeasure m;
    m.kind = Kind::cauchy_density;
    m.cutoff = 0.0;
    m.sqrt_singular = true;
    m.density = [](double w) { return 1.0 / (std::numbers::pi * std::sqrt(-w)); };
    m.closed_form = [](double x) { return 1.0 / std::sqrt(x); };
    return m;
  }

  /// (e^{-t sqrt(z)} - 1)/z with density sin(t sqrt(-w)) / (pi w).
  static StieltjesMeasure cauchy_frommer(double t) {
    StieltjesMeasure m;
    m.kind = Kind::cauchy_density;
    m.cutoff = 0.0;
    m.sqrt_singular = true;
    m.density = [t](double w) { return std::sin(t * std::sqrt(-w)) / (std::numbers::pi * w); };
    m.closed_form = [t](double x) { return std::expm1(-t * std::sqrt(x)) / x; };
    return m;
  }

  /// log(1+z)/z = int_{-inf}^{-1} (z - w)^{-1} (-w)^{-1} dw.
  static StieltjesMeasure cauchy_log_ratio() {
    StieltjesMeasure m;
    m.kind = Kind::cauchy_density;
    m.cutoff = -1.0;
    m.density = [](double w) { return 1.0 / (-w); };
    m.closed_form = [](double x) { return std::log1p(x) / x; };
    return m;
  }

  static StieltjesMeasure cauchy_custom(std::function<double(double)> dens, double cutoff,
                                        bool sqrt_singular_at_cutoff = false,
                                        std::function<double(double)> closed = nullptr) {
    StieltjesMeasure m;
    m.kind = Kind::cauchy_density;
    m.density = std::move(dens);
    m.cutoff = cutoff;
    m.sqrt_singular = sqrt_singular_at_cutoff;
    m.closed_form = std::move(closed);
    return m;
  }
};

struct QuadRule {
  Vector nodes;
  Vector weights;
  std::string family;
  Index q = 0;
};

// ---------------------------------------------------------------------------
// Rule construction (Golub-Welsch on the Jacobi matrices)
// ---------------------------------------------------------------------------

namespace detail {

/// Nodes/weights from a symmetric tridiagonal Jacobi matrix and moment mu0.
inline void golub_welsch(const Vector& diag, const Vector& offdiag, double mu0, Vector& nodes,
                         Vector& weights) {
  const Index q = diag.size();
  Matrix j = Matrix::Zero(q, q);
  j.diagonal() = diag;
  if (q > 1) {
    j.diagonal(1) = offdiag;
    j.diagonal(-1) = offdiag;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(j);
  nodes = es.eigenvalues();
  weights = mu0 * es.eigenvectors().row(0).transpose().cwiseAbs2();
}

/// Gauss-Legendre on [-1, 1].
inline void gauss_legendre(Index q, Vector& nodes, Vector& weights) {
  Vector d = Vector::Zero(q), e(q - 1 > 0 ? q - 1 : 0);
  for (Index k = 1; k < q; ++k) e[k - 1] = k / std::sqrt(4.0 * k * k - 1.0);
  golub_welsch(d, e, 2.0, nodes, weights);
}

/// Generalized Gauss-Laguerre for weight t^alpha e^{-t}, alpha > -1.
inline void gauss_laguerre(Index q, double alpha, Vector& nodes, Vector& weights) {
  Vector d(q), e(q - 1 > 0 ? q - 1 : 0);
  for (Index k = 0; k < q; ++k) d[k] = 2.0 * k + alpha + 1.0;
  for (Index k = 1; k < q; ++k) e[k - 1] = std::sqrt(k * (k + alpha));
  golub_welsch(d, e, std::tgamma(alpha + 1.0), nodes, weights);
}

inline void check_rule_finite(const QuadRule& r) {
  if (!r.nodes.allFinite() || !r.weights.allFinite())
    throw std::invalid_argument("quadrature rule overflow: reduce the node count q");
}

}  // namespace detail

/// Quadrature rule with kernel e^{-tau s}: sum_k w_k e^{-tau_k s} approximates
/// int e^{-tau s} d(alpha)(tau) for s >= s_min > 0. Laguerre-type rules are
/// scaled to the spectral lower bound; accuracy degrades slowly as
/// s_max/s_min grows.
inline QuadRule laplace_rule(const StieltjesMeasure& m, Index q, double s_min) {
  if (q < 1) throw std::invalid_argument("laplace_rule: q must be >= 1");
  QuadRule r;
  r.q = q;
  using K = StieltjesMeasure::Kind;
  switch (m.kind) {
    case K::laplace_point_mass:
      r.nodes = Vector::Constant(1, m.tau0);
      r.weights = Vector::Constant(1, 1.0);
      r.q = 1;
      r.family = "point-mass";
      return r;
    case K::laplace_gamma_density: {
      if (!(s_min > 0.0))
        throw std::invalid_argument("laplace_rule: density measures require a positive spectral lower bound");
      Vector t, w;
      detail::gauss_laguerre(q, -m.gamma, t, w);
      r.nodes = t / s_min;
      r.weights.resize(q);
      const double scale = m.coeff * std::pow(s_min, m.gamma - 1.0);
      for (Index k = 0; k < q; ++k) r.weights[k] = scale * w[k] * std::exp(t[k]);
      r.family = m.gamma == 0.0 ? "laguerre" : "gen-laguerre";
      detail::check_rule_finite(r);
      return r;
    }
    case K::laplace_ramp: {
      Vector u, w;
      detail::gauss_legendre(q, u, w);
      r.nodes = 0.5 * m.ramp_end * (u.array() + 1.0);
      r.weights = 0.5 * m.ramp_end * w;
      r.family = "legendre";
      return r;
    }
    case K::laplace_custom: {
      if (std::isfinite(m.support_hi)) {
        Vector u, w;
        detail::gauss_legendre(q, u, w);
        const double a = m.support_lo, b = m.support_hi;
        r.nodes = 0.5 * (b - a) * (u.array() + 1.0) + a;
        r.weights.resize(q);
        for (Index k = 0; k < q; ++k) r.weights[k] = 0.5 * (b - a) * w[k] * m.density(r.nodes[k]);
        r.family = "legendre";
        detail::check_rule_finite(r);
        return r;
      }
      if (!(s_min > 0.0))
        throw std::invalid_argument("laplace_rule: unbounded densities require a positive spectral lower bound");
      // Split at max(a, 1): Legendre on the bounded part, shifted Laguerre on the tail.
      const double a = m.support_lo;
      const double split = std::max(a, 1.0);
      const Index q_head = a < split ? q / 2 : 0;
      const Index q_tail = q - q_head;
      std::vector<double> nodes, weights;
      if (q_head > 0) {
        Vector u, w;
        detail::gauss_legendre(q_head, u, w);
        for (Index k = 0; k < q_head; ++k) {
          const double tau = 0.5 * (split - a) * (u[k] + 1.0) + a;
          nodes.push_back(tau);
          weights.push_back(0.5 * (split - a) * w[k] * m.density(tau));
        }
      }
      Vector t, w;
      detail::gauss_laguerre(q_tail, 0.0, t, w);
      for (Index k = 0; k < q_tail; ++k) {
        const double tau = split + t[k] / s_min;
        nodes.push_back(tau);
        weights.push_back(w[k] * std::exp(t[k]) / s_min * m.density(tau));
      }
      r.nodes = Eigen::Map<Vector>(nodes.data(), static_cast<Index>(nodes.size()));
      r.weights = Eigen::Map<Vector>(weights.data(), static_cast<Index>(weights.size()));
      r.q = r.nodes.size();
      r.family = "legendre+laguerre";
      detail::check_rule_finite(r);
      return r;
    }
    case K::cauchy_density:
      throw std::invalid_argument("laplace_rule: measure is of Cauchy kind");
  }
  throw std::logic_error("unreachable");
}

/// Quadrature rule with kernel (s - omega)^{-1}: nodes omega_k < cutoff.
/// Maps (-inf, c] to (0, 1] by omega = c - (1-u)/u (Gauss-Legendre in u);
/// an inverse-square-root endpoint singularity uses omega = -(t^2) first.
inline QuadRule cauchy_rule(const StieltjesMeasure& m, Index q) {
  if (m.laplace()) throw std::invalid_argument("cauchy_rule: measure is of Laplace kind");
  if (q < 1) throw std::invalid_argument("cauchy_rule: q must be >= 1");
  QuadRule r;
  r.q = q;
  Vector u, w;
  detail::gauss_legendre(q, u, w);
  r.nodes.resize(q);
  r.weights.resize(q);
  if (m.sqrt_singular) {
    if (m.cutoff != 0.0)
      throw std::invalid_argument("cauchy_rule: sqrt-singular map assumes cutoff 0");
    // omega = -t^2, t = (1-u)/u: absorbs the 1/sqrt(-omega) endpoint behavior.
    for (Index k = 0; k < q; ++k) {
      const double uk = 0.5 * (u[k] + 1.0);
      const double wk = 0.5 * w[k];
      const double t = (1.0 - uk) / uk;
      r.nodes[k] = -t * t;
      r.weights[k] = wk / (uk * uk) * 2.0 * t * m.density(r.nodes[k]);
    }
    r.family = "legendre-usq";
  } else {
    for (Index k = 0; k < q; ++k) {
      const double uk = 0.5 * (u[k] + 1.0);
      const double wk = 0.5 * w[k];
      r.nodes[k] = m.cutoff - (1.0 - uk) / uk;
      r.weights[k] = wk / (uk * uk) * m.density(r.nodes[k]);
    }
    r.family = "legendre-u";
  }
  detail::check_rule_finite(r);
  return r;
}

// ---------------------------------------------------------------------------
// Reference transforms and the quadrature error bound epsilon
// ---------------------------------------------------------------------------

namespace detail {

inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double tol, int depth = 24) {
  const double c = 0.5 * (a + b);
  const double fa = f(a), fb = f(b), fc = f(c);
  std::function<double(double, double, double, double, double, double, int)> rec =
      [&](double x0, double x2, double f0, double f1, double f2, double whole, int d) -> double {
    const double x05 = 0.5 * (x0 + 0.5 * (x0 + x2));
    const double x15 = 0.5 * (0.5 * (x0 + x2) + x2);
    const double xm = 0.5 * (x0 + x2);
    const double fl = f(x05), fr = f(x15);
    const double left = (xm - x0) / 6.0 * (f0 + 4.0 * fl + f1);
    const double right = (x2 - xm) / 6.0 * (f1 + 4.0 * fr + f2);
    if (d <= 0 || std::abs(left + right - whole) < 15.0 * tol)
      return left + right + (left + right - whole) / 15.0;
    return rec(x0, xm, f0, fl, f1, left, d - 1) + rec(xm, x2, f1, fr, f2, right, d - 1);
  };
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fc + fb);
  return rec(a, b, fa, fc, fb, whole, depth);
}

/// int e^{-s tau} d(alpha)(tau), analytically where possible.
inline double reference_laplace_transform(const StieltjesMeasure& m, double s) {
  if (m.closed_form) return m.closed_form(s);
  using K = StieltjesMeasure::Kind;
  switch (m.kind) {
    case K::laplace_point_mass: return std::exp(-m.tau0 * s);
    case K::laplace_gamma_density:
      return m.coeff * std::tgamma(1.0 - m.gamma) * std::pow(s, m.gamma - 1.0);
    case K::laplace_ramp: return -std::expm1(-s * m.ramp_end) / s;
    case K::laplace_custom: {
      const double hi = std::isfinite(m.support_hi) ? m.support_hi : m.support_lo + 80.0 / s + 1.0;
      return adaptive_simpson([&](double tau) { return std::exp(-s * tau) * m.density(tau); },
                              m.support_lo, hi, 1e-13);
    }
    case K::cauchy_density: break;
  }
  throw std::invalid_argument("reference transform: unsupported measure kind");
}

inline double rule_kernel_sum(const StieltjesMeasure& m, const QuadRule& r, double s) {
  double acc = 0.0;
  if (m.laplace()) {
    for (Index k = 0; k < r.q; ++k) acc += r.weights[k] * std::exp(-r.nodes[k] * s);
  } else {
    for (Index k = 0; k < r.q; ++k) acc += r.weights[k] / (s - r.nodes[k]);
  }
  return acc;
}

inline double reference_transform(const StieltjesMeasure& m, double s) {
  if (m.laplace()) return reference_laplace_transform(m, s);
  if (m.closed_form) return m.closed_form(s);
  // Numeric Cauchy reference through the same u-map as the rules, refined.
  const StieltjesMeasure& mm = m;
  return adaptive_simpson(
      [&](double u) {
        if (u <= 0.0) return 0.0;
        if (mm.sqrt_singular) {
          const double t = (1.0 - u) / u;
          const double w = -t * t;
          return 2.0 * t / (u * u) * mm.density(w) / (s - w);
        }
        const double w = mm.cutoff - (1.0 - u) / u;
        return mm.density(w) / (u * u) / (s - w);
      },
      1e-9, 1.0, 1e-13);
}

}  // namespace detail

/// Scalar quadrature error maximized over the pairwise spectral grid:
/// eps = max_{i,j} |f(lam_i + mu_j) - sum_k w_k kernel(node_k, lam_i + mu_j)|.
/// The matrix-level error obeys ||f(A)b - quad|| <= eps ||b|| for Hermitian
/// factors and interpolatory rules.
inline double quad_error_eps(const StieltjesMeasure& m, const QuadRule& r, const Vector& eigs1,
                             const Vector& eigs2) {
  double eps = 0.0;
  for (Index i = 0; i < eigs1.size(); ++i)
    for (Index j = 0; j < eigs2.size(); ++j) {
      const double s = eigs1[i] + eigs2[j];
      eps = std::max(eps, std::abs(detail::reference_transform(m, s) -
                                   detail::rule_kernel_sum(m, r, s)));
    }
  return eps;
}

/// Interval form for the Hermitian M1 = M2 case: sup over
/// s = lam + mu, lam, mu in [lam_min, lam_max], sampled densely.
inline double quad_error_eps_interval(const StieltjesMeasure& m, const QuadRule& r, double lam_min,
                                      double lam_max, Index samples = 2001) {
  double eps = 0.0;
  for (Index i = 0; i < samples; ++i) {
    const double f = static_cast<double>(i) / (samples - 1);
    const double s = 2.0 * (lam_min * std::pow(lam_max / lam_min, f));
    eps = std::max(eps,
                   std::abs(detail::reference_transform(m, s) - detail::rule_kernel_sum(m, r, s)));
  }
  for (double s : {2.0 * lam_min, lam_min + lam_max, 2.0 * lam_max})
    eps = std::max(eps,
                   std::abs(detail::reference_transform(m, s) - detail::rule_kernel_sum(m, r, s)));
  return eps;
}

// ---------------------------------------------------------------------------
// Quadrature evaluation against the shared factor bases
// ---------------------------------------------------------------------------

namespace detail {

inline int thread_count() {
  if (const char* env = std::getenv("KRONFAB_NUM_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 1;
}

template <typename F>
void parallel_for(Index n, F&& body) {
  const int nt = std::min<Index>(thread_count(), n);
  if (nt <= 1) {
    for (Index i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(nt);
  std::atomic<Index> counter{0};
  for (int t = 0; t < nt; ++t)
    pool.emplace_back([&] {
      for (Index i = counter.fetch_add(1); i < n; i = counter.fetch_add(1)) body(i);
    });
  for (auto& th : pool) th.join();
}

/// Fixed-order pairwise tree sum; the reduction order is independent of how
/// the slots were produced, so threaded evaluation stays bitwise identical.
template <typename T>
T pairwise_sum(std::vector<T> terms) {
  if (terms.empty()) throw std::invalid_argument("pairwise_sum: empty");
  Index n = static_cast<Index>(terms.size());
  while (n > 1) {
    Index half = 0;
    for (Index i = 0; i + 1 < n; i += 2) terms[half++] = terms[i] + terms[i + 1];
    if (n % 2 == 1) terms[half++] = terms[n - 1];
    n = half;
  }
  return terms[0];
}

/// exp(scale * T) * bhat against a fixed projected matrix, diagonalized once.
class ProjectedExp {
 public:
  explicit ProjectedExp(const Matrix& t) {
    if (is_symmetric(t, 1e-12)) {
      Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (t + t.transpose()));
      sym_vals_ = es.eigenvalues();
      sym_vecs_ = es.eigenvectors();
      sym_ = true;
      return;
    }
    dec_ = eigen_general(t);
    if (dec_->cond > 1e8) {
      t_ = t;  // fall back to one expm per node
      dec_.reset();
    }
  }

  Vector apply_exp(double scale, const Vector& bhat) const {
    if (sym_) {
      const Vector u = sym_vecs_.transpose() * bhat;
      return sym_vecs_ * (scale * sym_vals_.array()).exp().matrix().cwiseProduct(u);
    }
    if (dec_) {
      const ComplexVector u = dec_->inv_vectors * bhat.cast<Complex>();
      ComplexVector e(u.size());
      for (Index i = 0; i < u.size(); ++i) e[i] = std::exp(scale * dec_->values[i]) * u[i];
      return (dec_->vectors * e).real();
    }
    return expm(Matrix(scale * t_)) * bhat;
  }

  double min_real_eig() const {
    if (sym_) return sym_vals_.minCoeff();
    if (dec_) return dec_->values.real().minCoeff();
    return eigen_general(t_).values.real().minCoeff();
  }

 private:
  bool sym_ = false;
  Vector sym_vals_;
  Matrix sym_vecs_;
  std::optional<SpectralDecomp> dec_;
  Matrix t_;
};

}  // namespace detail

/// f(A)b ~ sum_k w_k exp(-tau_k A) b for a Laplace-kind measure. Both factor
/// bases are built once; every node reuses them through exponentials of the
/// scaled projected matrices. Returns the rank-q combination with the weight
/// magnitudes split across the two factors.
inline FactoredVector laplace_quad_eval(const StieltjesMeasure& measure, const LinOp& m1op,
                                        const Vector& b1, const LinOp& m2op, const Vector& b2,
                                        Index q, Index m, SpaceKind space = SpaceKind::krylov) {
  if (!measure.laplace()) throw std::invalid_argument("laplace_quad_eval: Cauchy measure supplied");
  detail::BasisDriver d1(m1op, b1, m, space, 1e8);
  detail::BasisDriver d2(m2op, b2, m, space, 1e8);
  d1.advance_to(m);
  d2.advance_to(m);
  const Index k1 = d1.dim(), k2 = d2.dim();
  const Matrix t1 = d1.projected(k1), t2 = d2.projected(k2);
  const detail::ProjectedExp e1(t1), e2(t2);
  const double s_min = e1.min_real_eig() + e2.min_real_eig();
  const bool needs_decay = measure.kind == StieltjesMeasure::Kind::laplace_gamma_density ||
                           (measure.kind == StieltjesMeasure::Kind::laplace_custom &&
                            !std::isfinite(measure.support_hi));
  if (needs_decay && s_min <= 0.0)
    throw std::runtime_error(
        "laplace_quad_eval: divergent measure/spectrum combination (spectral lower bound " +
        std::to_string(s_min) + " <= 0)");
  const QuadRule rule = laplace_rule(measure, q, s_min);
  const Vector bh1 = d1.bhat(k1), bh2 = d2.bhat(k2);
  Matrix y1(k1, rule.q), y2(k2, rule.q);
  detail::parallel_for(rule.q, [&](Index k) {
    const double sw = std::sqrt(std::abs(rule.weights[k]));
    const double sgn = rule.weights[k] < 0.0 ? -1.0 : 1.0;
    y1.col(k) = sgn * sw * e1.apply_exp(-rule.nodes[k], bh1);
    y2.col(k) = sw * e2.apply_exp(-rule.nodes[k], bh2);
  });
  return FactoredVector(d1.basis_cols(k1) * y1, Matrix::Identity(rule.q, rule.q),
                        d2.basis_cols(k2) * y2);
}

/// f(A)b ~ sum_k w_k (A - omega_k I)^{-1} b for a Cauchy-kind measure. One
/// basis pair serves every shift; per-node work is an m x m Sylvester solve.
/// Node contributions are combined by a fixed-order pairwise sum.
inline FactoredVector cauchy_quad_eval(const StieltjesMeasure& measure, const LinOp& m1op,
                                       const Vector& b1, const LinOp& m2op, const Vector& b2,
                                       Index q, Index m,
                                       ShiftSplit split = ShiftSplit::full_on_m1,
                                       SpaceKind space = SpaceKind::krylov) {
  if (measure.laplace()) throw std::invalid_argument("cauchy_quad_eval: Laplace measure supplied");
  detail::BasisDriver d1(m1op, b1, m, space, 1e8);
  detail::BasisDriver d2(m2op, b2, m, space, 1e8);
  d1.advance_to(m);
  d2.advance_to(m);
  const Index k1 = d1.dim(), k2 = d2.dim();
  const ShiftedSylvesterSolver solver(d1.projected(k1), d2.projected(k2));
  const QuadRule rule = cauchy_rule(measure, q);
  const ComplexMatrix c = (d1.bhat(k1) * d2.bhat(k2).transpose()).cast<Complex>();
  std::vector<Matrix> terms(rule.q);
  detail::parallel_for(rule.q, [&](Index k) {
    const double w = rule.nodes[k];
    const Complex s1 = split == ShiftSplit::full_on_m1 ? Complex(w) : Complex(w / 2.0);
    const Complex s2 = split == ShiftSplit::full_on_m1 ? Complex(0.0) : Complex(w / 2.0);
    terms[k] = rule.weights[k] * solver.solve(c, s1, s2).real();
  });
  return FactoredVector(d1.basis_cols(k1), detail::pairwise_sum(std::move(terms)),
                        d2.basis_cols(k2));
}

/// Cauchy-integral evaluation on a circle: counterclockwise trapezoidal rule
/// with the resolvent (z I - A)^{-1}, exponentially convergent for f analytic
/// inside. The circle must strictly enclose the projected spectrum.
inline FactoredVector contour_eval(const std::function<Complex(Complex)>& f, const LinOp& m1op,
                                   const Vector& b1, const LinOp& m2op, const Vector& b2,
                                   Complex center, double radius, Index q, Index m,
                                   SpaceKind space = SpaceKind::krylov) {
  if (q < 2) throw std::invalid_argument("contour_eval: q must be >= 2");
  detail::BasisDriver d1(m1op, b1, m, space, 1e8);
  detail::BasisDriver d2(m2op, b2, m, space, 1e8);
  d1.advance_to(m);
  d2.advance_to(m);
  const Index k1 = d1.dim(), k2 = d2.dim();
  const ShiftedSylvesterSolver solver(d1.projected(k1), d2.projected(k2));
  const ComplexVector l1 = solver.eigs1(), l2 = solver.eigs2();
  for (Index i = 0; i < l1.size(); ++i)
    for (Index j = 0; j < l2.size(); ++j)
      if (std::abs(l1[i] + l2[j] - center) >= radius)
        throw std::runtime_error("contour_eval: projected spectrum not enclosed by the circle");
  const ComplexMatrix c = (d1.bhat(k1) * d2.bhat(k2).transpose()).cast<Complex>();
  std::vector<ComplexMatrix> terms(q);
  detail::parallel_for(q, [&](Index k) {
    const double theta = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(q);
    const Complex zk = center + radius * std::polar(1.0, theta);
    // (z I - A)^{-1} b = -(A - z I)^{-1} b
    const ComplexMatrix yk = -solver.solve(c, zk, Complex(0.0));
    terms[k] = (f(zk) * radius * std::polar(1.0, theta) / static_cast<double>(q)) * yk;
  });
  const Matrix mid = detail::pairwise_sum(std::move(terms)).real();
  return FactoredVector(d1.basis_cols(k1), mid, d2.basis_cols(k2));
}

}  // namespace kronfab
