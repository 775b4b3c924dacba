#pragma once

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>

#include "kronfab/la_core.hpp"

namespace kronfab {

namespace detail {

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

[[noreturn]] inline void mm_fail(const std::string& path, long line, const std::string& msg) {
  throw std::runtime_error(path + ":" + std::to_string(line) + ": " + msg);
}

}  // namespace detail

/// Matrix Market reader: coordinate or array format, real field, 1-based
/// indices; symmetric-tagged files are expanded to full storage and duplicate
/// entries are summed.
inline SparseMatrix mm_read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("mm_read: cannot open '" + path + "'");
  long lineno = 0;
  std::string line;
  if (!std::getline(in, line)) detail::mm_fail(path, 1, "empty file");
  ++lineno;
  std::istringstream hdr(detail::lower(line));
  std::string banner, object, format, field, symmetry;
  hdr >> banner >> object >> format >> field >> symmetry;
  if (banner != "%%matrixmarket" || object != "matrix")
    detail::mm_fail(path, lineno, "malformed MatrixMarket header: '" + line + "'");
  const bool coordinate = format == "coordinate";
  if (!coordinate && format != "array")
    detail::mm_fail(path, lineno, "unsupported format '" + format + "' (coordinate or array)");
  if (field != "real" && field != "integer")
    detail::mm_fail(path, lineno, "unsupported field '" + field + "' (real expected)");
  const bool symmetric = symmetry == "symmetric";
  if (!symmetric && symmetry != "general")
    detail::mm_fail(path, lineno, "unsupported symmetry '" + symmetry + "' (general or symmetric)");

  // Skip comments and blank lines up to the size line.
  Index rows = 0, cols = 0;
  long long nnz = 0;
  while (true) {
    if (!std::getline(in, line)) detail::mm_fail(path, lineno + 1, "missing size line");
    ++lineno;
    if (!line.empty() && line[0] == '%') continue;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream sz(line);
    if (coordinate) {
      if (!(sz >> rows >> cols >> nnz)) detail::mm_fail(path, lineno, "malformed size line");
    } else {
      if (!(sz >> rows >> cols)) detail::mm_fail(path, lineno, "malformed size line");
      nnz = static_cast<long long>(rows) * cols;
    }
    break;
  }
  if (rows < 0 || cols < 0) detail::mm_fail(path, lineno, "negative dimensions");

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(symmetric ? 2 * nnz : nnz));
  if (coordinate) {
    for (long long k = 0; k < nnz; ++k) {
      Index i = 0, j = 0;
      double v = 0.0;
      if (!(in >> i >> j >> v)) detail::mm_fail(path, lineno + 1, "unexpected end of entries");
      ++lineno;
      if (i < 1 || i > rows || j < 1 || j > cols)
        detail::mm_fail(path, lineno,
                        "index (" + std::to_string(i) + ", " + std::to_string(j) + ") out of range");
      trip.emplace_back(i - 1, j - 1, v);
      if (symmetric && i != j) trip.emplace_back(j - 1, i - 1, v);
    }
  } else {
    // Array format stores columns contiguously; symmetric arrays hold the
    // lower triangle only.
    for (Index j = 0; j < cols; ++j) {
      const Index i0 = symmetric ? j : 0;
      for (Index i = i0; i < rows; ++i) {
        double v = 0.0;
        if (!(in >> v)) detail::mm_fail(path, lineno + 1, "unexpected end of entries");
        ++lineno;
        if (v == 0.0) continue;
        trip.emplace_back(i, j, v);
        if (symmetric && i != j) trip.emplace_back(j, i, v);
      }
    }
  }
  SparseMatrix out(rows, cols);
  out.setFromTriplets(trip.begin(), trip.end());
  out.makeCompressed();
  return out;
}

/// Writer: coordinate real general, values at 17 significant digits so a
/// write-then-read round trip is bit exact.
inline void mm_write(const std::string& path, const SparseMatrix& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("mm_write: cannot open '" + path + "' for writing");
  SparseMatrix c = m;
  c.makeCompressed();
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << c.rows() << " " << c.cols() << " " << c.nonZeros() << "\n";
  char buf[64];
  for (int k = 0; k < c.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(c, k); it; ++it) {
      std::snprintf(buf, sizeof(buf), "%lld %lld %.17g\n",
                    static_cast<long long>(it.row() + 1), static_cast<long long>(it.col() + 1),
                    it.value());
      out << buf;
    }
  if (!out) throw std::runtime_error("mm_write: write failure on '" + path + "'");
}

}  // namespace kronfab
