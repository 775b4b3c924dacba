#include <catch2/catch_amalgamated.hpp>

#include "test_support.hpp"

using namespace kronfab;
using Catch::Approx;

TEST_CASE("funm_sym trivial cases") {
  REQUIRE((funm_sym(Matrix::Zero(3, 3), ScalarFunctionSpec::exp()) - Matrix::Identity(3, 3))
              .norm() <= 1e-15);

  Matrix d = Vector{{4.0, 9.0}}.asDiagonal();
  const Matrix s = funm_sym(d, ScalarFunctionSpec::sqrt());
  REQUIRE(s(0, 0) == Approx(2.0).epsilon(1e-14));
  REQUIRE(s(1, 1) == Approx(3.0).epsilon(1e-14));
  REQUIRE(std::abs(s(0, 1)) <= 1e-14);
}

TEST_CASE("funm_sym inv_sqrt algebraic identity") {
  const Matrix t = kft::random_spd(5, 10);
  const Matrix r = funm_sym(t, ScalarFunctionSpec::inv_sqrt());
  REQUIRE((r * r * t - Matrix::Identity(5, 5)).norm() <= 1e-10);
}

TEST_CASE("funm_sym domain error names the eigenvalue") {
  Matrix d = Vector{{1.0, -2.5}}.asDiagonal();
  REQUIRE_THROWS_WITH(funm_sym(d, ScalarFunctionSpec::sqrt()),
                      Catch::Matchers::ContainsSubstring("-2.5"));
  REQUIRE_THROWS_AS(funm_sym(kft::random_matrix(3, 3, 1), ScalarFunctionSpec::exp()),
                    std::invalid_argument);
}

TEST_CASE("funm_sym custom identity map returns T") {
  const Matrix t = kft::random_symmetric(6, 12);
  const Matrix r = funm_sym(t, ScalarFunctionSpec::custom("id", [](double x) { return x; }));
  REQUIRE((r - t).norm() <= 1e-13 * t.norm());
}

TEST_CASE("expm closed forms") {
  REQUIRE((expm(Matrix::Zero(4, 4)) - Matrix::Identity(4, 4)).norm() == 0.0);

  Matrix n(2, 2);
  n << 0, 1, 0, 0;
  Matrix want(2, 2);
  want << 1, 1, 0, 1;
  REQUIRE((expm(n) - want).norm() <= 1e-15);

  Matrix d = Vector{{1.0, 2.0}}.asDiagonal();
  const Matrix e = expm(d);
  REQUIRE(e(0, 0) == Approx(std::exp(1.0)).epsilon(1e-13));
  REQUIRE(e(1, 1) == Approx(std::exp(2.0)).epsilon(1e-13));
}

TEST_CASE("expm inverse identity for random moderate norms") {
  for (int trial = 0; trial < 10; ++trial) {
    Matrix t = kft::random_matrix(6, 6, 500 + trial);
    t *= 5.0 / t.norm();
    REQUIRE((expm(t) * expm(Matrix(-t)) - Matrix::Identity(6, 6)).norm() <= 1e-10);
  }
}

TEST_CASE("expm large scaled norms stay accurate") {
  // Spectral check at norm ~1e3: exp(a) known entrywise in the eigenbasis.
  const Matrix q = Eigen::HouseholderQR<Matrix>(kft::random_matrix(5, 5, 62)).householderQ();
  Vector lam(5);
  lam << -1000.0, -750.0, -1.0, 0.5, 2.0;
  const Matrix t = q * lam.asDiagonal() * q.transpose();
  const Matrix want = q * lam.array().exp().matrix().asDiagonal() * q.transpose();
  REQUIRE((expm(t) - want).norm() <= 1e-12 * want.norm());
  REQUIRE_THROWS_AS(expm(Matrix(1e16 * Matrix::Identity(2, 2))), std::overflow_error);
}

TEST_CASE("expm of commuting matrices multiplies") {
  const Matrix s = kft::random_symmetric(5, 21);
  const Matrix t = s * s * 0.2 + 0.7 * s;  // polynomial in s commutes with s
  REQUIRE((expm(Matrix(s + t)) - expm(s) * expm(t)).norm() <= 1e-10 * expm(Matrix(s + t)).norm());
}

TEST_CASE("eigen_general symmetric and rotation cases") {
  const SpectralDecomp d = eigen_general(kft::random_symmetric(6, 33));
  REQUIRE(d.cond <= 1.0 + 1e-10);

  Matrix rot(2, 2);
  rot << 0, 1, -1, 0;
  const SpectralDecomp r = eigen_general(rot);
  Vector imags = r.values.imag();
  std::sort(imags.begin(), imags.end());
  REQUIRE(imags[0] == Approx(-1.0).epsilon(1e-12));
  REQUIRE(imags[1] == Approx(1.0).epsilon(1e-12));
  REQUIRE(r.values.real().cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("eigen_general reconstructs random matrices") {
  const Matrix t = kft::random_matrix(6, 6, 44);
  const SpectralDecomp d = eigen_general(t);
  const Matrix rec = (d.vectors * d.values.asDiagonal() * d.inv_vectors).real();
  REQUIRE((rec - t).norm() <= 1e-10 * d.cond);
}

TEST_CASE("eigen_general rejects defective matrices") {
  Matrix j(2, 2);
  j << 1, 1, 0, 1;  // Jordan block
  REQUIRE_THROWS_WITH(eigen_general(j), Catch::Matchers::ContainsSubstring("fallback"));
}

TEST_CASE("frommer phi avoids cancellation at small arguments") {
  const ScalarFunctionSpec phi = ScalarFunctionSpec::frommer_phi(1e-3);
  // Reference values computed with 50-digit arithmetic:
  // phi(x) = (e^{s sqrt(x)} - 1)/x at s = 1e-3.
  REQUIRE(phi(4.0) == Approx(5.0050016670834168e-04).epsilon(1e-13));
  REQUIRE(phi(1e-6) == Approx(1.0000005000001667e+00).epsilon(1e-13));
  const Complex z = phi(Complex(1e-6, 0.0));
  REQUIRE(z.real() == Approx(1.0000005000001667e+00).epsilon(1e-12));
  REQUIRE_THROWS_AS(phi(-1.0), std::domain_error);
}

TEST_CASE("log_ratio small-argument series") {
  const ScalarFunctionSpec lr = ScalarFunctionSpec::log_ratio();
  REQUIRE(lr(1.0) == Approx(std::log(2.0)).epsilon(1e-14));
  REQUIRE(lr(1e-10) == Approx(1.0).epsilon(1e-9));
}

TEST_CASE("lower incomplete gamma closed forms") {
  for (double x : {0.5, 1.0, 2.0})
    REQUIRE(lower_incomplete_gamma(1.0, x) == Approx(1.0 - std::exp(-x)).epsilon(1e-13));
  REQUIRE(lower_incomplete_gamma(5.0, 1e4) == Approx(24.0).epsilon(1e-12));
  REQUIRE(lower_incomplete_gamma(2.0, 1.0) == Approx(1.0 - 2.0 / std::exp(1.0)).epsilon(1e-12));
  REQUIRE(lower_incomplete_gamma(3.0, 0.0) == 0.0);
  REQUIRE_THROWS_AS(lower_incomplete_gamma(0.0, 1.0), std::invalid_argument);
  REQUIRE_THROWS_AS(lower_incomplete_gamma(1.0, -1.0), std::invalid_argument);
}

TEST_CASE("log lower incomplete gamma matches the linear scale") {
  for (double n : {0.5, 3.0, 7.5, 20.0})
    for (double x : {0.1, 1.0, 5.0, 40.0}) {
      const double direct = std::log(lower_incomplete_gamma(n, x));
      REQUIRE(log_lower_incomplete_gamma(n, x) == Approx(direct).margin(1e-11));
    }
  // Parameter range where the linear scale would overflow.
  const double big = log_lower_incomplete_gamma(400.0, 380.0);
  REQUIRE(std::isfinite(big));
  REQUIRE(big == Approx(std::lgamma(400.0) +
                        std::log(lower_incomplete_gamma(400.0, 380.0) / std::tgamma(400.0)))
                     .epsilon(1e-9));
}

TEST_CASE("incomplete gamma inequality on the sampled grid") {
  // gamma(n, a n) <= (a n)^n e^{-a n} / (n (1 - a)) for 0 < a < 1.
  for (int n = 5; n <= 50; ++n)
    for (int ai = 1; ai <= 9; ++ai) {
      const double alpha = 0.1 * ai;
      const double x = alpha * n;
      const double lhs = log_lower_incomplete_gamma(n, x);
      const double rhs = -std::log1p(-alpha) + n * std::log(x) - std::log(double(n)) - x;
      REQUIRE(lhs <= rhs + 1e-12);
    }
}

TEST_CASE("negated argument convention") {
  const ScalarFunctionSpec f = ScalarFunctionSpec::exp().negated_arg();
  REQUIRE(f(2.0) == Approx(std::exp(-2.0)).epsilon(1e-15));
  const Matrix t = kft::random_symmetric(4, 9);
  REQUIRE((funm_sym(t, f) - funm_sym(Matrix(-t), ScalarFunctionSpec::exp())).norm() <= 1e-12);
}
