#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "proofblocks/errors.hpp"
#include "proofblocks/linalg.hpp"
#include "test_support.hpp"

namespace proofblocks {
namespace {

using testing::MatrixNear;

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::Cancelled;
}

TEST(Matmul, Examples) {
  const Matrix m{{1, 2}, {3, 4}};
  EXPECT_EQ(matmul(Matrix::identity(2), m), m);
  const Matrix n{{0, 1}, {0, 0}};
  EXPECT_EQ(matmul(n, n), Matrix::zeros(2, 2));
  EXPECT_EQ(matmul(Matrix{{1, 2}}, Matrix{{3}, {4}}), (Matrix{{11}}));
  EXPECT_EQ(code_of([&] { matmul(Matrix{{1, 2}}, Matrix{{1, 2}}); }),
            ErrorCode::DimensionMismatch);
}

TEST(LuSolve, Examples) {
  const Matrix m{{1, 2}, {3, 4}};
  EXPECT_EQ(lu_solve(Matrix::identity(2), m), m);
  EXPECT_EQ(lu_solve(Matrix{{2}}, Matrix{{6}}), (Matrix{{3}}));
  EXPECT_EQ(code_of([] { lu_solve(Matrix{{1, 1}, {1, 1}}, Matrix{{1}, {2}}); }),
            ErrorCode::SingularMatrix);
  EXPECT_EQ(code_of([] { lu_solve(Matrix::zeros(2, 2), Matrix{{1}, {2}}); }),
            ErrorCode::SingularMatrix);
}

TEST(LuSolve, ResidualContract) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 50; ++t) {
    Matrix a = testing::random_matrix(rng, 6, 6);
    for (std::size_t i = 0; i < 6; ++i) a(i, i) += 4.0;
    const Matrix b = testing::random_matrix(rng, 6, 2);
    const Matrix x = lu_solve(a, b);
    EXPECT_LE((a * x - b).norm_inf(), 1e-10 * (1.0 + b.norm_inf()));
  }
}

TEST(LuSolve, RecoversRandomSolutions) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + t % 7;
    Matrix a = testing::random_matrix(rng, n, n);
    for (std::size_t i = 0; i < n; ++i) a(i, i) += static_cast<double>(n);
    const Matrix x = testing::random_matrix(rng, n, 1);
    const Matrix recovered = lu_solve(a, a * x);
    EXPECT_LE((recovered - x).max_abs(), 1e-8 * x.max_abs());
  }
}

TEST(Cholesky, Examples) {
  EXPECT_EQ(*cholesky(Matrix{{4}}), (Matrix{{2}}));
  EXPECT_FALSE(cholesky(Matrix{{1, 0}, {0, -1}}).has_value());
  EXPECT_TRUE(MatrixNear(*cholesky(Matrix{{4, 2}, {2, 5}}), Matrix{{2, 0}, {1, 2}}, 1e-15));
}

TEST(Cholesky, ReconstructsInput) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    const Matrix g = testing::random_matrix(rng, 5, 5);
    const Matrix m = g * g.transpose() + Matrix::identity(5) * 0.1;
    const auto l = cholesky(m);
    ASSERT_TRUE(l.has_value());
    EXPECT_LE((*l * l->transpose() - m).norm_inf(), 1e-9 * m.norm_inf());
  }
}

TEST(Cholesky, RejectsGrossAsymmetry) {
  EXPECT_EQ(code_of([] { cholesky(Matrix{{1, 1}, {0, 1}}); }), ErrorCode::PreconditionViolation);
}

TEST(SemidefiniteCheck, Examples) {
  EXPECT_TRUE(semidefinite_check(Matrix::zeros(3, 3), 1e-8).psd);

  const auto r = semidefinite_check(Matrix{{1, 0}, {0, -0.5}}, 1e-8);
  ASSERT_FALSE(r.psd);
  EXPECT_TRUE(MatrixNear(r.witness, Matrix{{0}, {1}}, 0.0));
  EXPECT_DOUBLE_EQ(r.witness_value, -0.5);

  EXPECT_TRUE(semidefinite_check(Matrix{{1, 1}, {1, 1}}, 1e-8).psd);
}

TEST(SemidefiniteCheck, ZeroDiagonalIndefinite) {
  const Matrix m{{0, 1}, {1, 0}};
  const auto r = semidefinite_check(m, 1e-8);
  ASSERT_FALSE(r.psd);
  EXPECT_LT(r.witness_value, 0.0);
}

TEST(SemidefiniteCheck, WitnessIsGenuine) {
  std::mt19937_64 rng(5);
  int refuted = 0;
  for (int t = 0; t < 200; ++t) {
    const Matrix g = testing::random_matrix(rng, 4, 4);
    Matrix m = g + g.transpose();
    const auto r = semidefinite_check(m, 1e-8);
    if (!r.psd) {
      ++refuted;
      const Matrix mv = m * r.witness;
      double q = 0.0;
      for (std::size_t i = 0; i < 4; ++i) q += r.witness(i, 0) * mv(i, 0);
      EXPECT_LT(q, 0.0);
    }
    const Matrix psd = g * g.transpose();
    EXPECT_TRUE(semidefinite_check(psd, 1e-8).psd);
  }
  EXPECT_GT(refuted, 150);
}

TEST(Kron, Examples) {
  EXPECT_EQ(kron(Matrix::identity(2), Matrix{{5}}), (Matrix{{5, 0}, {0, 5}}));
  EXPECT_EQ(kron(Matrix{{1, 2}}, Matrix{{1}, {1}}), (Matrix{{1, 2}, {1, 2}}));
  const Matrix a{{3, 1}, {2, 2}};
  const Matrix b{{7, 1}, {0, 1}};
  EXPECT_EQ(kron(a, b)(0, 0), a(0, 0) * b(0, 0));
}

TEST(Kron, MixedProductProperty) {
  std::mt19937_64 rng(13);
  for (int t = 0; t < 100; ++t) {
    const Matrix a = testing::random_matrix(rng, 2, 2), b = testing::random_matrix(rng, 2, 2);
    const Matrix c = testing::random_matrix(rng, 2, 2), d = testing::random_matrix(rng, 2, 2);
    EXPECT_TRUE(MatrixNear(kron(a, b) * kron(c, d), kron(a * c, b * d), 1e-12));
  }
}

TEST(Expm, Examples) {
  EXPECT_TRUE(MatrixNear(expm(Matrix::zeros(3, 3)), Matrix::identity(3), 0.0));
  const double h = 0.37;
  EXPECT_TRUE(MatrixNear(expm(Matrix{{0, h}, {0, 0}}), Matrix{{1, h}, {0, 1}}, 1e-15));
  EXPECT_NEAR(expm(Matrix{{std::log(2.0)}})(0, 0), 2.0, 1e-15);
}

TEST(Expm, AgreesWithTaylorSeries) {
  // Independent reference: plain Taylor series on a small-norm matrix.
  std::mt19937_64 rng(17);
  for (int t = 0; t < 20; ++t) {
    const Matrix a = testing::random_matrix(rng, 4, 4, -0.25, 0.25);
    Matrix term = Matrix::identity(4), sum = Matrix::identity(4);
    for (int k = 1; k < 30; ++k) {
      term = term * a * (1.0 / k);
      sum += term;
    }
    EXPECT_TRUE(MatrixNear(expm(a), sum, 1e-14));
  }
}

TEST(Expm, InverseProperty) {
  std::mt19937_64 rng(19);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + t % 5;
    Matrix a = testing::random_matrix(rng, n, n);
    a *= 5.0 / a.norm_inf();
    EXPECT_TRUE(MatrixNear(expm(a) * expm(-a), Matrix::identity(n), 1e-9));
  }
}

TEST(MinEig, Examples) {
  EXPECT_NEAR(min_eig_symmetric(Matrix::identity(2)), 1.0, 1e-12);
  EXPECT_NEAR(min_eig_symmetric(Matrix{{3, 0}, {0, 0.25}}), 0.25, 1e-12);
  EXPECT_NEAR(min_eig_symmetric(Matrix{{2, 1}, {1, 2}}), 1.0, 1e-9);
  EXPECT_EQ(code_of([] { min_eig_symmetric(Matrix{{1, 0}, {0, -1}}); }),
            ErrorCode::NotPositiveDefinite);
}

TEST(MinEig, EigenpairResidual) {
  std::mt19937_64 rng(23);
  for (int t = 0; t < 50; ++t) {
    const Matrix g = testing::random_matrix(rng, 5, 5);
    const Matrix m = g * g.transpose() + Matrix::identity(5);
    const auto pair = min_eig_symmetric_pair(m);
    const Matrix r = m * pair.vector - pair.vector * pair.value;
    double norm = 0.0;
    for (double v : r.data()) norm += v * v;
    EXPECT_LE(std::sqrt(norm), 1e-7 * m.norm_inf());
  }
}

}  // namespace
}  // namespace proofblocks
