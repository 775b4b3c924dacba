#pragma once

// Shared helpers for the test suites: seeded random matrices and the dense
// oracle that forms A = M2 (x) I + I (x) M1 explicitly and evaluates f on it.

#include <random>

#include "kronfab/kronfab.hpp"

namespace kft {

using namespace kronfab;

inline Matrix random_matrix(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = 2.0 * uniform01(gen) - 1.0;
  return m;
}

inline Vector random_vector(Index n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = 2.0 * uniform01(gen) - 1.0;
  return v;
}

inline Matrix random_symmetric(Index n, std::uint64_t seed) {
  Matrix m = random_matrix(n, n, seed);
  return 0.5 * (m + m.transpose());
}

inline Matrix random_spd(Index n, std::uint64_t seed, double shift = 0.5) {
  Matrix m = random_matrix(n, n, seed);
  return m * m.transpose() / static_cast<double>(n) + shift * Matrix::Identity(n, n);
}

/// Dense oracle: form A explicitly, evaluate f by a full decomposition of the
/// big matrix, apply to vec(b1 b2^T). Independent of the factored paths.
inline Vector oracle_fAb(const Matrix& m1, const Matrix& m2, const Vector& b1, const Vector& b2,
                         const ScalarFunctionSpec& f) {
  const Matrix a = form_kron_sum(m1, m2);
  return funm(a, f, 1e14) * vec(b1 * b2.transpose());
}

inline Vector ones(Index n) { return Vector::Ones(n); }

}  // namespace kft
