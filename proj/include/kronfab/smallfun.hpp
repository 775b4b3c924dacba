#pragma once

#include <cmath>
#include <complex>
#include <sstream>

#include "kronfab/la_core.hpp"

namespace kronfab {

// ---------------------------------------------------------------------------
// Scalar function specification
// ---------------------------------------------------------------------------

enum class FunKind { exp, sqrt, inv_sqrt, inverse, sin, cos, frommer_phi, log_ratio, custom };

/// Which f to apply, with parameters, domain requirements, and an optional
/// sign convention (evaluate f(-x) instead of f(x)).
class ScalarFunctionSpec {
 public:
  static ScalarFunctionSpec exp() { return {FunKind::exp, "exp"}; }
  static ScalarFunctionSpec sqrt() { return {FunKind::sqrt, "sqrt"}; }
  static ScalarFunctionSpec inv_sqrt() { return {FunKind::inv_sqrt, "invsqrt"}; }
  static ScalarFunctionSpec inverse() { return {FunKind::inverse, "inverse"}; }
  static ScalarFunctionSpec sin() { return {FunKind::sin, "sin"}; }
  static ScalarFunctionSpec cos() { return {FunKind::cos, "cos"}; }
  /// phi(z) = (e^{s sqrt(z)} - 1)/z with s > 0; positive spectrum required.
  static ScalarFunctionSpec frommer_phi(double s) {
    if (s <= 0.0) throw std::invalid_argument("frommer_phi: s must be > 0");
    ScalarFunctionSpec f{FunKind::frommer_phi, "phi(s=" + std::to_string(s) + ")"};
    f.param_ = s;
    return f;
  }
  /// log(1+z)/z; positive spectrum required.
  static ScalarFunctionSpec log_ratio() { return {FunKind::log_ratio, "logratio"}; }
  static ScalarFunctionSpec custom(std::string name, std::function<double(double)> f,
                                   std::function<Complex(Complex)> fc = nullptr) {
    ScalarFunctionSpec s{FunKind::custom, std::move(name)};
    s.real_fn_ = std::move(f);
    s.complex_fn_ = std::move(fc);
    return s;
  }

  FunKind kind() const { return kind_; }
  double param() const { return param_; }
  const std::string& name() const { return name_; }
  bool negated() const { return negate_; }

  /// Same f composed with x -> -x.
  ScalarFunctionSpec negated_arg() const {
    ScalarFunctionSpec f = *this;
    f.negate_ = !f.negate_;
    f.name_ = negate_ ? name_ : name_ + "(-x)";
    return f;
  }

  bool requires_positive() const {
    switch (kind_) {
      case FunKind::sqrt:
      case FunKind::inv_sqrt:
      case FunKind::frommer_phi:
      case FunKind::log_ratio:
        return true;
      default:
        return false;
    }
  }
  bool requires_nonzero() const {
    return kind_ == FunKind::inverse || kind_ == FunKind::inv_sqrt ||
           kind_ == FunKind::frommer_phi || kind_ == FunKind::log_ratio;
  }
  bool has_complex() const { return kind_ != FunKind::custom || static_cast<bool>(complex_fn_); }

  /// Throws std::domain_error naming the offending evaluation point.
  void check_domain(double x) const {
    const double y = negate_ ? -x : x;
    if (requires_positive() && y <= 0.0)
      throw std::domain_error(name_ + " undefined at evaluation point " + std::to_string(y));
    if (kind_ == FunKind::inverse && y == 0.0)
      throw std::domain_error("inverse undefined at evaluation point 0");
  }
  void check_domain(Complex z) const {
    const Complex y = negate_ ? -z : z;
    if (requires_positive() && y.real() <= 0.0) {
      std::ostringstream os;
      os << name_ << " requires positive real part, got evaluation point " << y;
      throw std::domain_error(os.str());
    }
    if (kind_ == FunKind::inverse && std::abs(y) == 0.0)
      throw std::domain_error("inverse undefined at evaluation point 0");
  }

  double operator()(double x) const {
    check_domain(x);
    const double y = negate_ ? -x : x;
    switch (kind_) {
      case FunKind::exp: return std::exp(y);
      case FunKind::sqrt: return std::sqrt(y);
      case FunKind::inv_sqrt: return 1.0 / std::sqrt(y);
      case FunKind::inverse: return 1.0 / y;
      case FunKind::sin: return std::sin(y);
      case FunKind::cos: return std::cos(y);
      case FunKind::frommer_phi: return std::expm1(param_ * std::sqrt(y)) / y;
      case FunKind::log_ratio: return std::abs(y) < 1e-8 ? 1.0 - y / 2.0 + y * y / 3.0 : std::log1p(y) / y;
      case FunKind::custom: return real_fn_(y);
    }
    throw std::logic_error("unreachable");
  }

  Complex operator()(Complex z) const {
    check_domain(z);
    const Complex y = negate_ ? -z : z;
    switch (kind_) {
      case FunKind::exp: return std::exp(y);
      case FunKind::sqrt: return std::sqrt(y);
      case FunKind::inv_sqrt: return 1.0 / std::sqrt(y);
      case FunKind::inverse: return 1.0 / y;
      case FunKind::sin: return std::sin(y);
      case FunKind::cos: return std::cos(y);
      case FunKind::frommer_phi: return expm1c(param_ * std::sqrt(y)) / y;
      case FunKind::log_ratio: return std::abs(y) < 1e-8 ? 1.0 - y / 2.0 + y * y / 3.0 : std::log(1.0 + y) / y;
      case FunKind::custom:
        if (!complex_fn_)
          throw std::domain_error("custom function '" + name_ + "' has no complex evaluator");
        return complex_fn_(y);
    }
    throw std::logic_error("unreachable");
  }

 private:
  ScalarFunctionSpec(FunKind k, std::string n) : kind_(k), name_(std::move(n)) {}

  // e^u - 1 without cancellation for small |u|.
  static Complex expm1c(Complex u) {
    if (std::abs(u) < 1e-4)
      return u * (1.0 + u * (0.5 + u * (1.0 / 6.0 + u * (1.0 / 24.0 + u / 120.0))));
    return std::exp(u) - 1.0;
  }

  FunKind kind_;
  std::string name_;
  double param_ = 0.0;
  bool negate_ = false;
  std::function<double(double)> real_fn_;
  std::function<Complex(Complex)> complex_fn_;
};

// ---------------------------------------------------------------------------
// Matrix functions of small dense matrices
// ---------------------------------------------------------------------------

/// f(T) for symmetric T by spectral evaluation Q f(Lambda) Q^T.
inline Matrix funm_sym(const Matrix& t, const ScalarFunctionSpec& f) {
  if (!is_symmetric(t, 1e-12))
    throw std::invalid_argument("funm_sym: input is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (t + t.transpose()));
  if (es.info() != Eigen::Success) throw std::runtime_error("funm_sym: eigendecomposition failed");
  Vector fl(es.eigenvalues().size());
  for (Index i = 0; i < fl.size(); ++i) fl[i] = f(es.eigenvalues()[i]);
  return es.eigenvectors() * fl.asDiagonal() * es.eigenvectors().transpose();
}

/// Matrix exponential by scaling and squaring with the degree-13 diagonal
/// Pade approximant. Handles nonsymmetric input.
inline Matrix expm(const Matrix& t) {
  if (t.rows() != t.cols()) throw std::invalid_argument("expm: square matrix required");
  const Index n = t.rows();
  if (n == 0) return Matrix(0, 0);
  static const double b[] = {64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
                             1187353796428800.0,  129060195264000.0,   10559470521600.0,
                             670442572800.0,      33522128640.0,       1323241920.0,
                             40840800.0,          960960.0,            16380.0,
                             182.0,               1.0};
  const double theta13 = 5.371920351148152;
  const double nrm = t.cwiseAbs().colwise().sum().maxCoeff();  // 1-norm
  if (!std::isfinite(nrm) || nrm > 1e15)
    throw std::overflow_error("expm: operator norm too large (" + std::to_string(nrm) + ")");
  int s = 0;
  if (nrm > theta13) s = static_cast<int>(std::ceil(std::log2(nrm / theta13)));
  const Matrix a = t / std::ldexp(1.0, s);
  const Matrix i = Matrix::Identity(n, n);
  const Matrix a2 = a * a;
  const Matrix a4 = a2 * a2;
  const Matrix a6 = a2 * a4;
  Matrix u = a * (a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * i);
  Matrix v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * i;
  Matrix f = (v - u).partialPivLu().solve(v + u);
  for (int k = 0; k < s; ++k) f = f * f;
  if (!f.allFinite()) throw std::overflow_error("expm: overflow during squaring phase");
  return f;
}

/// Eigendecomposition with a conditioning estimate for the eigenvector basis.
struct SpectralDecomp {
  ComplexVector values;
  ComplexMatrix vectors;      // X
  ComplexMatrix inv_vectors;  // X^{-1}
  double cond = 1.0;          // kappa_2(X)
  bool unsafe = false;        // cond > 1e8
};

inline SpectralDecomp eigen_general(const Matrix& t) {
  if (t.rows() != t.cols()) throw std::invalid_argument("eigen_general: square matrix required");
  SpectralDecomp d;
  if (is_symmetric(t, 1e-12)) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (t + t.transpose()));
    d.values = es.eigenvalues().cast<Complex>();
    d.vectors = es.eigenvectors().cast<Complex>();
    d.inv_vectors = es.eigenvectors().transpose().cast<Complex>();
    d.cond = 1.0;
    return d;
  }
  Eigen::EigenSolver<Matrix> es(t);
  if (es.info() != Eigen::Success) throw std::runtime_error("eigen_general: eigendecomposition failed");
  d.values = es.eigenvalues();
  d.vectors = es.eigenvectors();
  Eigen::JacobiSVD<ComplexMatrix> svd(d.vectors);
  const double smin = svd.singularValues().minCoeff();
  const double smax = svd.singularValues().maxCoeff();
  if (smin <= smax * 1e-14)
    throw std::runtime_error(
        "eigen_general: eigenvector basis is singular to working precision "
        "(defective matrix); use the explicit f(T_m) fallback path");
  d.cond = smax / smin;
  d.unsafe = d.cond > 1e8;
  d.inv_vectors = d.vectors.partialPivLu().solve(ComplexMatrix::Identity(t.rows(), t.rows()));
  return d;
}

/// f(T) dispatcher for small dense T: spectral evaluation with a conditioning
/// gate on the nonsymmetric path; exp falls back to expm unconditionally.
inline Matrix funm(const Matrix& t, const ScalarFunctionSpec& f, double cond_gate = 1e8) {
  if (is_symmetric(t, 1e-12)) return funm_sym(t, f);
  if (f.kind() == FunKind::exp) {
    return f.negated() ? expm(Matrix(-t)) : expm(t);
  }
  SpectralDecomp d = eigen_general(t);
  if (d.cond > cond_gate)
    throw std::runtime_error("funm: eigenvector conditioning " + std::to_string(d.cond) +
                             " exceeds gate; use the explicit f(T_m) fallback path");
  if (!f.has_complex())
    throw std::domain_error("funm: function '" + f.name() + "' lacks a complex evaluator for nonsymmetric input");
  ComplexVector fl(d.values.size());
  for (Index i = 0; i < fl.size(); ++i) fl[i] = f(d.values[i]);
  ComplexMatrix g = d.vectors * fl.asDiagonal() * d.inv_vectors;
  return g.real();
}

// ---------------------------------------------------------------------------
// Lower incomplete gamma
// ---------------------------------------------------------------------------

namespace detail {

// Series for the regularized-ish sum S with gamma(n,x) = x^n e^{-x} S.
inline double lig_series_sum(double n, double x) {
  double term = 1.0 / n;
  double sum = term;
  for (int k = 1; k < 10000; ++k) {
    term *= x / (n + k);
    sum += term;
    if (term < sum * 1e-17) break;
  }
  return sum;
}

// Continued fraction (modified Lentz) for the upper gamma:
// Gamma(n,x) = e^{-x} x^n * cf.
inline double lig_upper_cf(double n, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - n;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - n);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return h;
}

}  // namespace detail

/// gamma(n, x) = int_0^x t^{n-1} e^{-t} dt for n > 0, x >= 0.
/// Series for x < n+1, continued fraction via the complement otherwise.
inline double lower_incomplete_gamma(double n, double x) {
  if (!(n > 0.0)) throw std::invalid_argument("lower_incomplete_gamma: n must be > 0");
  if (!(x >= 0.0)) throw std::invalid_argument("lower_incomplete_gamma: x must be >= 0");
  if (x == 0.0) return 0.0;
  if (x < n + 1.0) {
    return std::exp(n * std::log(x) - x) * detail::lig_series_sum(n, x);
  }
  const double upper = std::exp(n * std::log(x) - x) * detail::lig_upper_cf(n, x);
  return std::tgamma(n) - upper;
}

/// log(gamma(n, x)), stable for parameter ranges where the value itself
/// overflows or underflows a double.
inline double log_lower_incomplete_gamma(double n, double x) {
  if (!(n > 0.0)) throw std::invalid_argument("log_lower_incomplete_gamma: n must be > 0");
  if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
  if (x < n + 1.0) {
    return n * std::log(x) - x + std::log(detail::lig_series_sum(n, x));
  }
  const double log_upper = n * std::log(x) - x + std::log(detail::lig_upper_cf(n, x));
  const double log_full = std::lgamma(n);
  // gamma = Gamma(n) - Gamma(n,x); here Gamma(n,x) < Gamma(n).
  return log_full + std::log1p(-std::exp(log_upper - log_full));
}

}  // namespace kronfab
