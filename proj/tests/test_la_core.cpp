#include <catch2/catch_amalgamated.hpp>

#include "test_support.hpp"

using namespace kronfab;
using Catch::Approx;

TEST_CASE("vec stacks columns") {
  Matrix x(2, 2);
  x << 1, 3, 2, 4;
  const Vector v = vec(x);
  REQUIRE(v[0] == 1.0);
  REQUIRE(v[1] == 2.0);
  REQUIRE(v[2] == 3.0);
  REQUIRE(v[3] == 4.0);
}

TEST_CASE("unvec inverts vec") {
  Vector v(4);
  v << 1, 2, 3, 4;
  const Matrix x = unvec(v, 2, 2);
  REQUIRE(x(0, 0) == 1.0);
  REQUIRE(x(1, 0) == 2.0);
  REQUIRE(x(0, 1) == 3.0);
  REQUIRE(x(1, 1) == 4.0);
  REQUIRE_THROWS_AS(unvec(v, 3, 2), std::invalid_argument);
}

TEST_CASE("vec/unvec round trip on random 7x3") {
  const Matrix x = kft::random_matrix(7, 3, 11);
  REQUIRE((unvec(vec(x), 7, 3) - x).norm() == 0.0);
}

TEST_CASE("kron_dense basics") {
  Matrix y = kft::random_matrix(3, 2, 5);
  const Matrix k = kron_dense(Matrix::Identity(2, 2), y);
  REQUIRE((k.topLeftCorner(3, 2) - y).norm() == 0.0);
  REQUIRE((k.bottomRightCorner(3, 2) - y).norm() == 0.0);
  REQUIRE(k.topRightCorner(3, 2).norm() == 0.0);

  Matrix x(2, 2);
  x << 0, 1, 1, 0;
  Matrix s(1, 1);
  s << 2;
  const Matrix k2 = kron_dense(x, s);
  REQUIRE(k2(0, 1) == 2.0);
  REQUIRE(k2(1, 0) == 2.0);
  REQUIRE(k2(0, 0) == 0.0);
}

TEST_CASE("kron mixed product on vectors and matrices") {
  const Matrix x = kft::random_matrix(3, 3, 1), y = kft::random_matrix(3, 3, 2);
  const Vector u = kft::random_vector(3, 3), v = kft::random_vector(3, 3 + 1);
  const Vector lhs = kron_dense(x, y) * kron_vec(u, v);
  const Vector rhs = kron_vec(Vector(x * u), Vector(y * v));
  REQUIRE((lhs - rhs).norm() <= 1e-13 * rhs.norm());

  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = kft::random_matrix(3, 4, 100 + trial), b = kft::random_matrix(4, 2, 200 + trial);
    const Matrix c = kft::random_matrix(2, 3, 300 + trial), d = kft::random_matrix(3, 5, 400 + trial);
    const Matrix lhs2 = kron_dense(a, c) * kron_dense(b, d);
    const Matrix rhs2 = kron_dense(a * b, c * d);
    REQUIRE((lhs2 - rhs2).norm() <= 1e-12 * rhs2.norm());
  }
}

TEST_CASE("kron_dense overflow guard") {
  const Matrix big = Matrix::Zero(1, 1 << 30);
  REQUIRE_THROWS_AS(kron_dense(big, big), std::overflow_error);
}

TEST_CASE("kron_sum_apply trivial operators") {
  const Index n1 = 3, n2 = 4;
  KronSumOp zero(LinOp::dense(Matrix::Zero(n1, n1)), LinOp::dense(Matrix::Zero(n2, n2)));
  const Vector v = kft::random_vector(n1 * n2, 7);
  REQUIRE(zero.apply(v).norm() == 0.0);

  KronSumOp ident(LinOp::dense(Matrix::Identity(n1, n1)), LinOp::dense(Matrix::Identity(n2, n2)));
  REQUIRE((ident.apply(v) - 2.0 * v).norm() <= 1e-15 * v.norm());
}

TEST_CASE("kron_sum_apply matches explicitly formed A") {
  const Matrix m1 = kft::random_matrix(4, 4, 21), m2 = kft::random_matrix(3, 3, 22);
  KronSumOp op(LinOp::dense(m1), LinOp::dense(m2));
  const Matrix a = form_kron_sum(m1, m2);
  const Vector v = kft::random_vector(12, 23);
  REQUIRE((op.apply(v) - a * v).norm() <= 1e-13 * (a * v).norm());
}

TEST_CASE("kron_sum_apply randomized against dense formation") {
  std::mt19937_64 gen(99);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n1 = 1 + static_cast<Index>(uniform01(gen) * 19);
    const Index n2 = 1 + static_cast<Index>(uniform01(gen) * 19);
    const Matrix m1 = kft::random_matrix(n1, n1, 1000 + trial);
    const Matrix m2 = kft::random_matrix(n2, n2, 2000 + trial);
    KronSumOp op(LinOp::sparse(SparseMatrix(m1.sparseView())), LinOp::dense(m2));
    const Vector v = kft::random_vector(n1 * n2, 3000 + trial);
    const Vector want = form_kron_sum(m1, m2) * v;
    REQUIRE((op.apply(v) - want).norm() <= 1e-12 * std::max(want.norm(), 1.0));
  }
}

TEST_CASE("kron_sum_spectrum ordering and values") {
  Vector e1(2), e2(2);
  e1 << 1, 2;
  e2 << 10, 20;
  const Vector s = kron_sum_spectrum(e1, e2);
  REQUIRE(s[0] == 11.0);
  REQUIRE(s[1] == 12.0);
  REQUIRE(s[2] == 21.0);
  REQUIRE(s[3] == 22.0);

  Vector zero1(1);
  zero1 << 0.0;
  REQUIRE((kron_sum_spectrum(e1, zero1) - e1).norm() == 0.0);
}

TEST_CASE("kron_sum_spectrum matches dense eigenvalues, n1=n2=8") {
  const Matrix m1 = kft::random_symmetric(8, 31), m2 = kft::random_symmetric(8, 32);
  Eigen::SelfAdjointEigenSolver<Matrix> e1(m1), e2(m2), ea(form_kron_sum(m1, m2));
  Vector s = kron_sum_spectrum(e1.eigenvalues(), e2.eigenvalues());
  std::sort(s.begin(), s.end());
  REQUIRE((s - ea.eigenvalues()).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("tridiag eigenvalues and symmetry") {
  // -tridiag(1,-2,1) of size 3 has eigenvalues 2 - 2 cos(k pi / 4).
  const Matrix t = -Matrix(tridiag(3, 1.0, -2.0, 1.0));
  Eigen::SelfAdjointEigenSolver<Matrix> es(t);
  const double r2 = std::sqrt(2.0);
  REQUIRE(es.eigenvalues()[0] == Approx(2.0 - r2).epsilon(1e-12));
  REQUIRE(es.eigenvalues()[1] == Approx(2.0).epsilon(1e-12));
  REQUIRE(es.eigenvalues()[2] == Approx(2.0 + r2).epsilon(1e-12));

  const SparseMatrix one = tridiag(1, 5.0, -7.0, 3.0);
  REQUIRE(one.rows() == 1);
  REQUIRE(one.coeff(0, 0) == -7.0);

  REQUIRE(is_symmetric(tridiag(6, 2.0, -3.0, 2.0)));
  REQUIRE_FALSE(is_symmetric(tridiag(6, 2.0, -3.0, 1.0)));
  REQUIRE_THROWS_AS(tridiag(0, 1, 1, 1), std::invalid_argument);
}

TEST_CASE("LowRankRHS materializes the outer product") {
  const Vector b1 = kft::random_vector(4, 41), b2 = kft::random_vector(3, 42);
  LowRankRHS rhs(b1, b2);
  REQUIRE(rhs.rank() == 1);
  REQUIRE((rhs.materialize() - vec(b1 * b2.transpose())).norm() == 0.0);
  REQUIRE_THROWS_AS(LowRankRHS(Matrix::Ones(3, 2), Matrix::Ones(3, 1)), std::invalid_argument);
}

TEST_CASE("index type holds large product dimensions") {
  const Index n1 = Index{1} << 27, n2 = Index{1} << 26;
  REQUIRE(n1 * n2 == Index{1} << 53);
  REQUIRE_THROWS_AS(form_kron_sum(Matrix::Zero(200, 200), Matrix::Zero(200, 200)),
                    std::invalid_argument);
}

TEST_CASE("LinOp dimension mismatches and solves") {
  const Matrix m = kft::random_spd(5, 77);
  LinOp op = LinOp::dense(m);
  REQUIRE_THROWS_AS(op.apply(Vector::Ones(4)), std::invalid_argument);
  const Vector x = kft::random_vector(5, 78);
  REQUIRE((op.solve(m * x) - x).norm() <= 1e-10 * x.norm());

  LinOp d = LinOp::diagonal(Vector::LinSpaced(5, 1.0, 5.0));
  REQUIRE((d.solve(d.apply(x)) - x).norm() <= 1e-14 * x.norm());
}
