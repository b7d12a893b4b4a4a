#include "proofblocks/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "proofblocks/errors.hpp"

namespace proofblocks {

namespace {

void require_square(const Matrix& m, const char* op) {
  if (!m.is_square() || m.empty()) {
    throw Error(ErrorCode::DimensionMismatch,
                std::string(op) + " requires a non-empty square matrix, got " +
                    std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) { return a * b; }

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix k(a.rows() * b.rows(), a.cols() * b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      for (std::size_t p = 0; p < b.rows(); ++p)
        for (std::size_t q = 0; q < b.cols(); ++q)
          k(i * b.rows() + p, j * b.cols() + q) = a(i, j) * b(p, q);
  return k;
}

Matrix vec(const Matrix& m) {
  Matrix v(m.size(), 1);
  for (std::size_t c = 0; c < m.cols(); ++c)
    for (std::size_t r = 0; r < m.rows(); ++r) v(c * m.rows() + r, 0) = m(r, c);
  return v;
}

Matrix unvec(const Matrix& v, std::size_t rows, std::size_t cols) {
  if (v.size() != rows * cols) throw Error(ErrorCode::DimensionMismatch, "unvec size");
  Matrix m(rows, cols);
  for (std::size_t c = 0; c < cols; ++c)
    for (std::size_t r = 0; r < rows; ++r) m(r, c) = v.data()[c * rows + r];
  return m;
}

Matrix symmetrize(const Matrix& m, const Tolerances& tol) {
  require_square(m, "symmetrize");
  Matrix s(m.rows(), m.cols());
  double asym = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      s(i, j) = 0.5 * (m(i, j) + m(j, i));
      asym = std::max(asym, std::abs(m(i, j) - m(j, i)));
    }
  }
  if (asym > tol.symmetry * m.norm_inf()) {
    throw Error(ErrorCode::PreconditionViolation,
                "matrix is not symmetric (max asymmetry " + std::to_string(asym) + ")");
  }
  return s;
}

LuFactorization::LuFactorization(const Matrix& a, const Tolerances& tol) : lu_(a) {
  require_square(a, "lu");
  const std::size_t n = a.rows();
  perm_.resize(n);
  for (std::size_t i = 0; i < n; ++i) perm_[i] = i;
  const double threshold = tol.lu_pivot * a.norm_inf();
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(lu_(i, k)) > std::abs(lu_(p, k))) p = i;
    const double pivot = std::abs(lu_(p, k));
    if (pivot == 0.0 || pivot < threshold || !std::isfinite(pivot)) {
      throw Error(ErrorCode::SingularMatrix,
                  "pivot " + std::to_string(pivot) + " in column " + std::to_string(k));
    }
    if (p != k) {
      for (std::size_t c = 0; c < n; ++c) std::swap(lu_(k, c), lu_(p, c));
      std::swap(perm_[k], perm_[p]);
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = lu_(i, k) / lu_(k, k);
      lu_(i, k) = f;
      if (f == 0.0) continue;
      for (std::size_t c = k + 1; c < n; ++c) lu_(i, c) -= f * lu_(k, c);
    }
  }
}

Matrix LuFactorization::solve(const Matrix& b) const {
  const std::size_t n = lu_.rows();
  if (b.rows() != n) {
    throw Error(ErrorCode::DimensionMismatch, "lu_solve: right-hand side has " +
                                                  std::to_string(b.rows()) + " rows, expected " +
                                                  std::to_string(n));
  }
  Matrix x(n, b.cols());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < b.cols(); ++c) x(i, c) = b(perm_[i], c);
  for (std::size_t c = 0; c < b.cols(); ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = x(i, c);
      for (std::size_t k = 0; k < i; ++k) s -= lu_(i, k) * x(k, c);
      x(i, c) = s;
    }
    for (std::size_t i = n; i-- > 0;) {
      double s = x(i, c);
      for (std::size_t k = i + 1; k < n; ++k) s -= lu_(i, k) * x(k, c);
      x(i, c) = s / lu_(i, i);
    }
  }
  return x;
}

Matrix lu_solve(const Matrix& a, const Matrix& b, const Tolerances& tol) {
  return LuFactorization(a, tol).solve(b);
}

std::optional<Matrix> cholesky(const Matrix& m, const Tolerances& tol) {
  const Matrix s = symmetrize(m, tol);
  const std::size_t n = s.rows();
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = s(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0)) return std::nullopt;
    l(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = s(i, j);
      for (std::size_t k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
      l(i, j) = v / l(j, j);
    }
  }
  return l;
}

SemidefiniteResult semidefinite_check(const Matrix& m, double psd_tol, const Tolerances& tol) {
  const Matrix s = symmetrize(m, tol);
  const std::size_t n = s.rows();
  const double threshold = psd_tol * (1.0 + s.norm_inf());

  Matrix w = s;
  Matrix l = Matrix::identity(n);
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;

  // Direction u (in permuted, reduced coordinates k..n-1) with u'Wu < 0.
  auto refute = [&](std::size_t k, std::vector<double> u) {
    std::vector<double> z(n, 0.0);
    for (std::size_t i = k; i < n; ++i) z[i] = u[i - k];
    for (std::size_t i = n; i-- > 0;) {
      double v = z[i];
      for (std::size_t j = i + 1; j < n; ++j) v -= l(j, i) * z[j];
      z[i] = v;
    }
    Matrix witness(n, 1);
    for (std::size_t i = 0; i < n; ++i) witness(perm[i], 0) = z[i];
    const double norm = std::sqrt(dot(witness.data(), witness.data()));
    witness *= 1.0 / norm;
    const Matrix sv = s * witness;
    SemidefiniteResult r;
    r.psd = false;
    r.witness_value = dot(witness.data(), sv.data());
    r.witness = std::move(witness);
    return r;
  };

  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    std::size_t q = k;
    for (std::size_t i = k + 1; i < n; ++i) {
      if (w(i, i) > w(p, p)) p = i;
      if (w(i, i) < w(q, q)) q = i;
    }
    if (w(p, p) < -threshold) {
      std::vector<double> u(n - k, 0.0);
      u[q - k] = 1.0;
      return refute(k, std::move(u));
    }
    if (w(p, p) <= threshold) {
      // Remaining block has a numerically zero diagonal; it is PSD only if
      // its off-diagonal part vanishes as well.
      std::size_t bi = k, bj = k;
      double best = 0.0;
      for (std::size_t i = k; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
          if (std::abs(w(i, j)) > best) best = std::abs(w(i, j)), bi = i, bj = j;
      if (best > threshold) {
        std::vector<double> u(n - k, 0.0);
        u[bi - k] = 1.0;
        u[bj - k] = w(bi, bj) > 0.0 ? -1.0 : 1.0;
        return refute(k, std::move(u));
      }
      return {};
    }
    if (p != k) {
      for (std::size_t c = 0; c < n; ++c) std::swap(w(k, c), w(p, c));
      for (std::size_t r = 0; r < n; ++r) std::swap(w(r, k), w(r, p));
      for (std::size_t c = 0; c < k; ++c) std::swap(l(k, c), l(p, c));
      std::swap(perm[k], perm[p]);
    }
    const double pivot = w(k, k);
    for (std::size_t i = k + 1; i < n; ++i) l(i, k) = w(i, k) / pivot;
    for (std::size_t i = k + 1; i < n; ++i)
      for (std::size_t j = k + 1; j < n; ++j) w(i, j) -= l(i, k) * w(k, j);
    for (std::size_t i = k + 1; i < n; ++i) w(i, k) = w(k, i) = 0.0;
  }
  return {};
}

Matrix expm(const Matrix& a) {
  require_square(a, "expm");
  static constexpr double b[] = {64764752532480000.0,
                                 32382376266240000.0,
                                 7771770303897600.0,
                                 1187353796428800.0,
                                 129060195264000.0,
                                 10559470521600.0,
                                 670442572800.0,
                                 33522128640.0,
                                 1323241920.0,
                                 40840800.0,
                                 960960.0,
                                 16380.0,
                                 182.0,
                                 1.0};
  constexpr double theta13 = 5.371920351148152;
  const std::size_t n = a.rows();
  const double norm = a.norm_1();
  int squarings = 0;
  if (norm > theta13) squarings = static_cast<int>(std::ceil(std::log2(norm / theta13)));
  const Matrix x = a * std::ldexp(1.0, -squarings);
  const Matrix ident = Matrix::identity(n);
  const Matrix x2 = x * x;
  const Matrix x4 = x2 * x2;
  const Matrix x6 = x4 * x2;
  const Matrix u = x * (x6 * (b[13] * x6 + b[11] * x4 + b[9] * x2) + b[7] * x6 + b[5] * x4 +
                        b[3] * x2 + b[1] * ident);
  const Matrix v =
      x6 * (b[12] * x6 + b[10] * x4 + b[8] * x2) + b[6] * x6 + b[4] * x4 + b[2] * x2 + b[0] * ident;
  Matrix r = lu_solve(v - u, v + u);
  for (int i = 0; i < squarings; ++i) r = r * r;
  return r;
}

EigenPair min_eig_symmetric_pair(const Matrix& m, const Tolerances& tol) {
  if (!cholesky(m, tol)) {
    throw Error(ErrorCode::NotPositiveDefinite, "min_eig_symmetric requires a PD matrix");
  }
  const Matrix s = symmetrize(m, tol);
  const std::size_t n = s.rows();
  const double scale = s.norm_inf();
  const double target = tol.eig_relative * scale;

  Matrix x(n, 1);
  for (std::size_t i = 0; i < n; ++i) x(i, 0) = 1.0 + 0.1 * std::sin(1.0 + static_cast<double>(i));
  x *= 1.0 / std::sqrt(dot(x.data(), x.data()));

  struct Step {
    double lambda;
    double residual;
  };
  auto iterate = [&](const LuFactorization& lu) -> Step {
    Matrix y = lu.solve(x);
    y *= 1.0 / std::sqrt(dot(y.data(), y.data()));
    x = std::move(y);
    const Matrix sx = s * x;
    const double lambda = dot(x.data(), sx.data());
    double r2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = sx(i, 0) - lambda * x(i, 0);
      r2 += r * r;
    }
    return {lambda, std::sqrt(r2)};
  };
  // Every eigenvalue at or below mu + slack means mu is the smallest.
  auto is_smallest = [&](double mu) {
    Matrix shifted = s;
    const double slack = mu - 1e3 * target;
    for (std::size_t i = 0; i < n; ++i) shifted(i, i) -= slack;
    return cholesky(shifted, tol).has_value();
  };

  const LuFactorization plain(s, tol);
  double previous = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < tol.eig_max_iterations; ++iter) {
    const Step st = iterate(plain);
    if (st.residual <= target) return {st.lambda, x};
    const bool stalling = std::abs(previous - st.lambda) <= 1e-3 * st.lambda;
    previous = st.lambda;
    if (!stalling || iter < 2) continue;

    // Shifted inverse iteration just below the current Rayleigh quotient;
    // some eigenvalue lies within one residual norm of it.
    const double shift = st.lambda - st.residual;
    Matrix shifted = s;
    for (std::size_t i = 0; i < n; ++i) shifted(i, i) -= shift;
    try {
      const LuFactorization fast(shifted, tol);
      const Matrix saved = x;
      for (int k = 0; k < 50 && iter + k < tol.eig_max_iterations; ++k) {
        const Step sh = iterate(fast);
        if (sh.residual <= target) {
          if (is_smallest(sh.lambda)) return {sh.lambda, x};
          break;
        }
      }
      x = saved;
    } catch (const Error&) {
      // Shift landed on an eigenvalue; keep iterating without it.
    }
  }
  throw Error(ErrorCode::NoConvergence, "inverse power iteration did not converge");
}

double min_eig_symmetric(const Matrix& m, const Tolerances& tol) {
  return min_eig_symmetric_pair(m, tol).value;
}

}  // namespace proofblocks
