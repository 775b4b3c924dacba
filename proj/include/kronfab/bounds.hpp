#pragma once

#include "kronfab/stieltjes.hpp"

namespace kronfab {

// ---------------------------------------------------------------------------
// Spectral parameters for symmetric positive definite factors
// ---------------------------------------------------------------------------

struct SpectralParams {
  double lambda_min = 1.0;
  double lambda_max = 1.0;

  static SpectralParams from_extremes(double lmin, double lmax) {
    if (!(lmin > 0.0) || !(lmax >= lmin))
      throw std::invalid_argument("SpectralParams: need lambda_max >= lambda_min > 0");
    return {lmin, lmax};
  }

  double rho() const { return 0.25 * (lambda_max - lambda_min); }
  double kappa() const { return lambda_max / lambda_min; }
  double kappa_hat() const { return (lambda_max + lambda_min) / (2.0 * lambda_min); }
  double kappa_hat_omega(double omega) const {
    return (lambda_max + lambda_min - 0.5 * omega) / (2.0 * lambda_min - 0.5 * omega);
  }
};

struct BoundReport {
  struct Row {
    Index m = 0;
    double value = 0.0;
    std::string regime;
    bool valid = true;
  };
  std::vector<Row> rows;
};

// ---------------------------------------------------------------------------
// Exponential bounds (Lanczos approximation of exp(-tau M) v, ||v|| = 1,
// spectrum of M in [0, 4 rho])
// ---------------------------------------------------------------------------

enum class HlRegime { quadratic, superlinear };  // regimes i and ii

inline bool hl_regime_valid(HlRegime r, Index m, double rho, double tau) {
  const double rt = rho * tau;
  if (r == HlRegime::quadratic)
    return rt >= 1.0 && std::sqrt(4.0 * rt) <= static_cast<double>(m) &&
           static_cast<double>(m) <= 2.0 * rt;
  return static_cast<double>(m) >= 2.0 * rt;
}

/// Raw per-regime formula, in log space to survive table-range parameters.
inline double hl_exp_bound_regime(HlRegime r, Index m, double rho, double tau) {
  if (!hl_regime_valid(r, m, rho, tau))
    throw std::invalid_argument("hl_exp_bound_regime: (m, rho*tau) outside the requested regime");
  const double rt = rho * tau;
  const double md = static_cast<double>(m);
  if (r == HlRegime::quadratic) return 10.0 * std::exp(-md * md / (5.0 * rt));
  const double lg = std::log(10.0) - std::log(rt) - rt + md * (1.0 + std::log(rt) - std::log(md));
  return std::exp(lg);
}

struct HlBound {
  double value = 0.0;
  HlRegime regime = HlRegime::quadratic;
  bool quadratic_valid = false;
  bool superlinear_valid = false;
};

/// Error envelope for the Arnoldi/Lanczos exponential approximation.
/// Regime boundaries are closed as stated; at the overlap point the smaller
/// bound is returned with its regime tag.
inline HlBound hl_exp_bound(Index m, double rho, double tau) {
  HlBound out;
  out.quadratic_valid = hl_regime_valid(HlRegime::quadratic, m, rho, tau);
  out.superlinear_valid = hl_regime_valid(HlRegime::superlinear, m, rho, tau);
  if (!out.quadratic_valid && !out.superlinear_valid)
    throw std::domain_error("hl_exp_bound: no valid regime for m = " + std::to_string(m) +
                            ", rho*tau = " + std::to_string(rho * tau));
  double vq = std::numeric_limits<double>::infinity();
  double vs = std::numeric_limits<double>::infinity();
  if (out.quadratic_valid) vq = hl_exp_bound_regime(HlRegime::quadratic, m, rho, tau);
  if (out.superlinear_valid) vs = hl_exp_bound_regime(HlRegime::superlinear, m, rho, tau);
  out.value = std::min(vq, vs);
  out.regime = vq <= vs ? HlRegime::quadratic : HlRegime::superlinear;
  return out;
}

/// Ratio exp(rho/2) / 2^{m-1} between the structured and unstructured
/// superlinear exponential bounds (M1 = M2, tau = 1).
inline double rate_ratio(double rho, Index m) {
  if (m < 1) throw std::invalid_argument("rate_ratio: m must be >= 1");
  return std::exp(0.5 * rho - (static_cast<double>(m) - 1.0) * std::log(2.0));
}

// ---------------------------------------------------------------------------
// Laplace-Stieltjes bound (structured approximation, d(alpha) = tau^{-gamma} d tau)
// ---------------------------------------------------------------------------

struct LsBoundTerms {
  double gamma_term = 0.0;  // incomplete-gamma part of I1 (x10)
  double gauss_term = 0.0;  // Gaussian-integral part of I1 (x10)
  double i2 = 0.0;          // tail integral bound
  double total = 0.0;       // 2 (I1 + I2); for gamma = 0 the closed bound
  double rate = 0.0;        // asymptotic factor exp(-2 m / sqrt(kappa_hat))
  std::string regime;
};

/// Error bound for the structured Krylov approximation of a Laplace-Stieltjes
/// function with density tau^{-gamma}. Everything is assembled in log space;
/// the non-integer incomplete-gamma order is rounded up to the next integer.
inline LsBoundTerms ls_bound(Index m, const SpectralParams& p, double gamma) {
  if (gamma < 0.0) throw std::invalid_argument("ls_bound: gamma must be >= 0");
  const double md = static_cast<double>(m);
  const double rho = p.rho(), lmin = p.lambda_min;
  const double kh = p.kappa_hat();
  const double sk = std::sqrt(kh);
  const double log_r = std::log(sk - 1.0) - std::log(sk + 1.0);
  LsBoundTerms out;
  out.rate = std::exp(-2.0 * md / sk);
  if (gamma == 0.0) {
    out.regime = "gamma0";
    out.total = 2.0 * (sk + 1.0) / (lmin * sk) * std::exp(md * log_r);
    return out;
  }
  if (!(md > gamma)) throw std::invalid_argument("ls_bound: the incomplete-gamma term needs m > gamma");
  out.regime = "split";
  // I2 <= (4 rho / m^2)^gamma * (sqrt(kh)+1)/(lmin sqrt(kh)) * r^m
  const double log_i2 = gamma * (std::log(4.0 * rho) - 2.0 * std::log(md)) +
                        std::log((sk + 1.0) / (lmin * sk)) + md * log_r;
  out.i2 = std::exp(log_i2);
  // I1, first piece: 10/rho (e rho / m)^m (2 lmin + rho)^{-(m-gamma)} gamma(n', x)
  double order = md - gamma;
  if (std::abs(order - std::round(order)) > 1e-12) order = std::ceil(order);
  const double x = (2.0 * lmin + rho) / (2.0 * rho) * md;
  const double log_g = std::log(10.0) - std::log(rho) + md * (1.0 + std::log(rho) - std::log(md)) -
                       (md - gamma) * std::log(2.0 * lmin + rho) +
                       log_lower_incomplete_gamma(order, x);
  out.gamma_term = std::exp(log_g);
  // I1, second piece: 10 (2 rho / m)^{gamma - 1/2} sqrt(pi/(2 lmin)) e^{-2m sqrt(2 lmin/(5 rho))}
  const double log_gauss = std::log(10.0) + (gamma - 0.5) * std::log(2.0 * rho / md) +
                           0.5 * (std::log(std::numbers::pi) - std::log(2.0 * lmin)) -
                           2.0 * md * std::sqrt(2.0 * lmin / (5.0 * rho));
  out.gauss_term = std::exp(log_gauss);
  out.total = 2.0 * (out.gamma_term + out.gauss_term + out.i2);
  return out;
}

inline BoundReport ls_bound_report(Index m_max, Index stride, const SpectralParams& p,
                                   double gamma) {
  BoundReport report;
  for (Index m = stride; m <= m_max; m += stride) {
    BoundReport::Row row;
    row.m = m;
    if (gamma > 0.0 && static_cast<double>(m) <= gamma) {
      row.valid = false;
      row.regime = "m<=gamma";
    } else {
      const LsBoundTerms t = ls_bound(m, p, gamma);
      row.value = t.total;
      row.regime = t.regime;
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Cauchy-Stieltjes bound: 2 r^m * integral constant
// ---------------------------------------------------------------------------

enum class CsFunctionTag { inv_sqrt, log_ratio, custom_integral };

/// The omega-integral of (sqrt(kh_w)+1)/((lmin - w/2) sqrt(kh_w)) d gamma(w):
/// closed constants for the two named transforms, adaptive quadrature otherwise.
inline double cs_bound_constant(const SpectralParams& p, CsFunctionTag tag,
                                const StieltjesMeasure* custom = nullptr) {
  switch (tag) {
    case CsFunctionTag::inv_sqrt: return 2.0 + 4.0 / p.lambda_min;
    case CsFunctionTag::log_ratio: return 4.0;
    case CsFunctionTag::custom_integral: break;
  }
  if (!custom || custom->laplace())
    throw std::invalid_argument("cs_bound: custom tag requires a Cauchy-kind measure");
  const auto integrand_omega = [&](double w) {
    const double khw = p.kappa_hat_omega(w);
    const double skw = std::sqrt(khw);
    return (skw + 1.0) / ((p.lambda_min - 0.5 * w) * skw) * custom->density(w);
  };
  double value;
  if (custom->sqrt_singular) {
    value = detail::adaptive_simpson(
        [&](double u) {
          if (u <= 0.0) return 0.0;
          const double t = (1.0 - u) / u;
          return integrand_omega(-t * t) * 2.0 * t / (u * u);
        },
        1e-10, 1.0, 1e-12);
  } else {
    value = detail::adaptive_simpson(
        [&](double u) {
          if (u <= 0.0) return 0.0;
          const double w = custom->cutoff - (1.0 - u) / u;
          return integrand_omega(w) / (u * u);
        },
        1e-10, 1.0, 1e-12);
  }
  if (!std::isfinite(value)) throw std::runtime_error("cs_bound: divergent custom integral");
  return value;
}

inline double cs_bound(Index m, const SpectralParams& p, CsFunctionTag tag,
                       const StieltjesMeasure* custom = nullptr) {
  const double sk = std::sqrt(p.kappa_hat());
  const double log_r = std::log(sk - 1.0) - std::log(sk + 1.0);
  return 2.0 * std::exp(static_cast<double>(m) * log_r) * cs_bound_constant(p, tag, custom);
}

// ---------------------------------------------------------------------------
// Per-step contraction factors
// ---------------------------------------------------------------------------

enum class RateKind { standard_krylov, structured_krylov, extended_krylov };

/// Asymptotic per-step error contraction: (sqrt(k)-1)/(sqrt(k)+1) with
/// k = kappa for the standard space, k = kappa_hat for the structured one,
/// and the fourth root of kappa for the extended space.
inline double asymptotic_rate(const SpectralParams& p, RateKind kind) {
  double s = 1.0;
  switch (kind) {
    case RateKind::standard_krylov: s = std::sqrt(p.kappa()); break;
    case RateKind::structured_krylov: s = std::sqrt(p.kappa_hat()); break;
    case RateKind::extended_krylov: s = std::sqrt(std::sqrt(p.kappa())); break;
  }
  return (s - 1.0) / (s + 1.0);
}

}  // namespace kronfab
