#pragma once

#include <optional>
#include <vector>

#include "proofblocks/matrix.hpp"
#include "proofblocks/tolerances.hpp"

namespace proofblocks {

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix kron(const Matrix& a, const Matrix& b);

// Column-major vectorization and its inverse.
Matrix vec(const Matrix& m);
Matrix unvec(const Matrix& v, std::size_t rows, std::size_t cols);

// Returns (m + m')/2. Throws DimensionMismatch for non-square input and
// PreconditionViolation when the asymmetry exceeds tol.symmetry * |m|_inf.
Matrix symmetrize(const Matrix& m, const Tolerances& tol = {});

// LU factorization with partial pivoting.
class LuFactorization {
 public:
  explicit LuFactorization(const Matrix& a, const Tolerances& tol = {});

  Matrix solve(const Matrix& b) const;
  std::size_t dim() const noexcept { return lu_.rows(); }

 private:
  Matrix lu_;
  std::vector<std::size_t> perm_;
};

// Solves a x = b. Throws SingularMatrix when a pivot magnitude falls below
// tol.lu_pivot * |a|_inf.
Matrix lu_solve(const Matrix& a, const Matrix& b, const Tolerances& tol = {});

// Lower-triangular L with L L' = m, or nullopt if m is not positive definite.
std::optional<Matrix> cholesky(const Matrix& m, const Tolerances& tol = {});

struct SemidefiniteResult {
  bool psd = true;
  Matrix witness;  // column vector v with v'mv < 0 when !psd
  double witness_value = 0.0;
};

// Symmetric-pivoted LDL'. PSD iff no pivot < -psd_tol * (1 + |m|_inf).
SemidefiniteResult semidefinite_check(const Matrix& m, double psd_tol,
                                      const Tolerances& tol = {});

// Scaling and squaring with the degree-13 Pade approximant.
Matrix expm(const Matrix& a);

struct EigenPair {
  double value = 0.0;
  Matrix vector;  // unit-norm column
};

// Smallest eigenvalue of a symmetric positive definite matrix by inverse
// power iteration. Throws NotPositiveDefinite or NoConvergence.
EigenPair min_eig_symmetric_pair(const Matrix& m, const Tolerances& tol = {});
double min_eig_symmetric(const Matrix& m, const Tolerances& tol = {});

}  // namespace proofblocks
