#pragma once

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "proofblocks/matrix.hpp"

namespace proofblocks::testing {

inline ::testing::AssertionResult MatrixNear(const Matrix& actual, const Matrix& expected,
                                             double tol) {
  if (actual.rows() != expected.rows() || actual.cols() != expected.cols()) {
    return ::testing::AssertionFailure()
           << "shape " << actual.rows() << "x" << actual.cols() << " vs " << expected.rows()
           << "x" << expected.cols();
  }
  for (std::size_t r = 0; r < actual.rows(); ++r) {
    for (std::size_t c = 0; c < actual.cols(); ++c) {
      if (!(std::abs(actual(r, c) - expected(r, c)) <= tol)) {
        return ::testing::AssertionFailure()
               << "entry (" << r << "," << c << "): " << actual(r, c) << " vs "
               << expected(r, c) << "\nactual   " << actual.to_string() << "\nexpected "
               << expected.to_string();
      }
    }
  }
  return ::testing::AssertionSuccess();
}

inline Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols,
                            double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = dist(rng);
  return m;
}

// Hurwitz by construction: N - (|N| + rho) I.
inline Matrix random_hurwitz(std::mt19937_64& rng, std::size_t n, double rho = 0.5) {
  Matrix a = random_matrix(rng, n, n);
  const double shift = a.norm_inf() + rho;
  for (std::size_t i = 0; i < n; ++i) a(i, i) -= shift;
  return a;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline std::string corpus_path(const std::string& name) {
  return std::string(PROOFBLOCKS_CORPUS_DIR) + "/" + name;
}

inline std::string data_path(const std::string& name) {
  return std::string(PROOFBLOCKS_TEST_DATA_DIR) + "/" + name;
}

}  // namespace proofblocks::testing
