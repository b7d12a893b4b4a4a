#include "proofblocks/certificates.hpp"

#include <algorithm>
#include <cmath>

#include "proofblocks/errors.hpp"
#include "proofblocks/linalg.hpp"

namespace proofblocks {

namespace {

Matrix average_symmetric(const Matrix& m) {
  Matrix out = m;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = 0.5 * (m(i, j) + m(j, i));
  return out;
}

void require_square(const Matrix& a, const char* what) {
  if (a.empty() || !a.is_square())
    throw Error(ErrorCode::DimensionMismatch, std::string(what) + " must be square");
}

void require_same_shape(const Matrix& a, const Matrix& q) {
  if (q.rows() != a.rows() || q.cols() != a.cols())
    throw Error(ErrorCode::DimensionMismatch, "Q must have the shape of A");
}

Matrix solve_vectorized(const Matrix& op, const Matrix& q, const Tolerances& tol) {
  const std::size_t n = q.rows();
  try {
    Matrix p = unvec(lu_solve(op, -vec(q), tol), n, n);
    return average_symmetric(p);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::SingularMatrix) throw;
    throw Error(ErrorCode::SingularOperator,
                "Lyapunov operator is singular (eigenvalues of A pair to the stability boundary)");
  }
}

// Raw A'P + PA = -Q without verification (Q may be only semidefinite).
Matrix lyapunov_raw(const Matrix& a, const Matrix& q, const Tolerances& tol) {
  const Matrix at = a.transpose();
  const Matrix eye = Matrix::identity(a.rows());
  return solve_vectorized(kron(eye, at) + kron(at, eye), q, tol);
}

Matrix lyapunov_residual(const Matrix& a, const Matrix& p, const Matrix& q) {
  return matmul(a.transpose(), p) + matmul(p, a) + q;
}

bool is_hurwitz(const Matrix& a, const Tolerances& tol) {
  try {
    return solve_lyapunov_continuous(a, Matrix::identity(a.rows()), tol).verified();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::SingularOperator || e.code() == ErrorCode::SingularMatrix)
      return false;
    throw;
  }
}

// Largest eigenvalue of a symmetric positive semidefinite matrix.
double power_iteration(const Matrix& m) {
  const std::size_t n = m.rows();
  Matrix v(n, 1);
  for (std::size_t i = 0; i < n; ++i) v(i, 0) = 1.0 + 0.01 * static_cast<double>(i);
  double lambda = 0.0;
  for (int it = 0; it < 5000; ++it) {
    Matrix w = matmul(m, v);
    double norm = 0.0;
    for (double x : w.data()) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) return 0.0;
    double vn = 0.0;
    for (double x : v.data()) vn += x * x;
    const double next = norm / std::sqrt(vn);
    w *= 1.0 / norm;
    v = std::move(w);
    if (std::abs(next - lambda) <= 1e-15 * next) return next;
    lambda = next;
  }
  return lambda;
}

// sigma_max(C (jwI - A)^-1 B) through the real 2n embedding.
double gain_at(const StateSpaceModel& ss, double w, const Tolerances& tol) {
  const std::size_t n = ss.n(), m = ss.m(), p = ss.p();
  Matrix big(2 * n, 2 * n);
  Matrix rhs(2 * n, m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      big(i, j) = -ss.a(i, j);
      big(n + i, n + j) = -ss.a(i, j);
    }
    big(i, n + i) = -w;
    big(n + i, i) = w;
    for (std::size_t k = 0; k < m; ++k) rhs(i, k) = ss.b(i, k);
  }
  const Matrix xy = lu_solve(big, rhs, tol);
  const Matrix gr = matmul(ss.c, xy.block(0, 0, n, m));
  const Matrix gi = matmul(ss.c, xy.block(n, 0, n, m));
  Matrix h(2 * p, 2 * m);
  h.set_block(0, 0, gr);
  h.set_block(0, m, -gi);
  h.set_block(p, 0, gi);
  h.set_block(p, m, gr);
  return std::sqrt(power_iteration(matmul(h.transpose(), h)));
}

void require_strictly_proper(const StateSpaceModel& ss) {
  if (ss.d.max_abs() != 0.0)
    throw Error(ErrorCode::PreconditionViolation, "L2-gain analysis requires D = 0");
}

Matrix dissipation_lmi_continuous(const StateSpaceModel& ss, const Matrix& p, double alpha) {
  const std::size_t n = ss.n(), m = ss.m();
  const Matrix pb = matmul(p, ss.b);
  Matrix lmi(n + m, n + m);
  lmi.set_block(0, 0, -(lyapunov_residual(ss.a, p, matmul(ss.c.transpose(), ss.c))));
  lmi.set_block(0, n, -pb);
  lmi.set_block(n, 0, -pb.transpose());
  lmi.set_block(n, n, Matrix::identity(m) * (alpha * alpha));
  return average_symmetric(lmi);
}

Matrix dissipation_lmi_discrete(const StateSpaceModel& ss, const Matrix& p, double alpha) {
  const std::size_t n = ss.n(), m = ss.m();
  const double h = *ss.sample_time;
  const Matrix adt_p = matmul(ss.a.transpose(), p);
  const Matrix top_left = matmul(adt_p, ss.a) - p + matmul(ss.c.transpose(), ss.c) * h;
  const Matrix top_right = matmul(adt_p, ss.b);
  const Matrix bottom_right =
      matmul(matmul(ss.b.transpose(), p), ss.b) - Matrix::identity(m) * (alpha * alpha * h);
  Matrix lmi(n + m, n + m);
  lmi.set_block(0, 0, -top_left);
  lmi.set_block(0, n, -top_right);
  lmi.set_block(n, 0, -top_right.transpose());
  lmi.set_block(n, n, -bottom_right);
  return average_symmetric(lmi);
}

}  // namespace

const SignalSlot* StateSpaceModel::input(const std::string& id) const {
  for (const auto& s : inputs)
    if (s.id == id) return &s;
  return nullptr;
}

const char* to_string(CertificateKind kind) {
  switch (kind) {
    case CertificateKind::LyapunovContinuous: return "lyapunov";
    case CertificateKind::LyapunovDiscrete: return "lyapunov_discrete";
    case CertificateKind::L2Gain: return "l2gain";
  }
  return "?";
}

const char* to_string(CertificateStatus status) {
  switch (status) {
    case CertificateStatus::Unverified: return "unverified";
    case CertificateStatus::Verified: return "verified";
    case CertificateStatus::Refuted: return "refuted";
  }
  return "?";
}

const char* to_string(Provenance provenance) {
  return provenance == Provenance::Internal ? "internal" : "external";
}

Certificate solve_lyapunov_continuous(const Matrix& a, const Matrix& q, const Tolerances& tol) {
  require_square(a, "A");
  require_same_shape(a, q);
  const Matrix qs = symmetrize(q, tol);
  Certificate cert;
  cert.kind = CertificateKind::LyapunovContinuous;
  cert.p = lyapunov_raw(a, qs, tol);
  cert.residual = lyapunov_residual(a, cert.p, qs).norm_inf();
  const bool ok = cholesky(cert.p, tol).has_value() &&
                  cert.residual <= tol.lyapunov_residual * qs.norm_inf();
  cert.status = ok ? CertificateStatus::Verified : CertificateStatus::Refuted;
  return cert;
}

Certificate solve_lyapunov_discrete(const Matrix& ad, const Matrix& q, const Tolerances& tol) {
  require_square(ad, "Ad");
  require_same_shape(ad, q);
  const Matrix qs = symmetrize(q, tol);
  const Matrix adt = ad.transpose();
  const Matrix op = kron(adt, adt) - Matrix::identity(ad.rows() * ad.rows());
  Certificate cert;
  cert.kind = CertificateKind::LyapunovDiscrete;
  cert.p = solve_vectorized(op, qs, tol);
  cert.residual = (matmul(matmul(adt, cert.p), ad) - cert.p + qs).norm_inf();
  const bool ok = cholesky(cert.p, tol).has_value() &&
                  cert.residual <= tol.lyapunov_residual * qs.norm_inf();
  cert.status = ok ? CertificateStatus::Verified : CertificateStatus::Refuted;
  return cert;
}

double hinf_norm_estimate(const StateSpaceModel& ss, const Tolerances& tol,
                          const CancellationToken* cancel) {
  if (ss.is_discrete())
    throw Error(ErrorCode::PreconditionViolation, "H-infinity estimate needs a continuous model");
  require_square(ss.a, "A");
  require_strictly_proper(ss);
  if (!is_hurwitz(ss.a, tol))
    throw Error(ErrorCode::NotStable, "no Lyapunov certificate exists for A");
  if (ss.m() == 0 || ss.p() == 0) return 0.0;

  auto eval = [&](double logw) { return gain_at(ss, std::pow(10.0, logw), tol); };
  constexpr int kGrid = 200;
  constexpr double kLo = -4.0, kHi = 4.0;
  const double step = (kHi - kLo) / (kGrid - 1);
  double best = gain_at(ss, 0.0, tol);
  int best_k = -1;
  for (int k = 0; k < kGrid; ++k) {
    if (cancel) cancel->check();
    const double g = eval(kLo + step * k);
    if (g > best) {
      best = g;
      best_k = k;
    }
  }
  if (best_k < 0) return best;

  // Golden-section search on log10(w) around the best grid point.
  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = kLo + step * (best_k - 1), b = kLo + step * (best_k + 1);
  double c = b - ratio * (b - a), d = a + ratio * (b - a);
  double fc = eval(c), fd = eval(d);
  while ((b - a) * std::log(10.0) > tol.golden_step) {
    if (cancel) cancel->check();
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - ratio * (b - a);
      fc = eval(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + ratio * (b - a);
      fd = eval(d);
    }
  }
  return std::max({best, fc, fd});
}

double riccati_residual(const StateSpaceModel& ss, const Matrix& p, double gamma) {
  const Matrix pb = matmul(p, ss.b);
  const Matrix r = lyapunov_residual(ss.a, p, matmul(ss.c.transpose(), ss.c)) +
                   matmul(pb, pb.transpose()) * (1.0 / (gamma * gamma));
  return r.norm_inf();
}

Certificate bounded_real_certificate(const StateSpaceModel& ss, double gamma,
                                     const Tolerances& tol, const CancellationToken* cancel,
                                     std::vector<double>* residuals) {
  if (ss.is_discrete())
    throw Error(ErrorCode::PreconditionViolation, "bounded-real certificate needs a continuous model");
  require_square(ss.a, "A");
  require_strictly_proper(ss);
  if (!(gamma > 0.0)) throw Error(ErrorCode::PreconditionViolation, "gamma must be > 0");
  if (!is_hurwitz(ss.a, tol))
    throw Error(ErrorCode::NotStable, "no Lyapunov certificate exists for A");

  const double g2 = 1.0 / (gamma * gamma);
  const Matrix ctc = matmul(ss.c.transpose(), ss.c);
  const Matrix bbt = matmul(ss.b, ss.b.transpose());
  Matrix p = lyapunov_raw(ss.a, ctc, tol);
  if (residuals) residuals->push_back(riccati_residual(ss, p, gamma));

  bool converged = false;
  for (int it = 0; it < tol.newton_max_iterations; ++it) {
    if (cancel) cancel->check();
    const Matrix ak = ss.a + matmul(bbt, p) * g2;
    if (!is_hurwitz(ak, tol))
      throw Error(ErrorCode::InfeasibleGain,
                  "gamma " + std::to_string(gamma) + " is below the L2 gain (Newton iterate lost stability)");
    const Matrix pbbp = matmul(matmul(p, bbt), p);
    Matrix next = lyapunov_raw(ak, ctc - pbbp * g2, tol);
    const double change = (next - p).norm_inf();
    const double scale = p.norm_inf();
    p = std::move(next);
    if (!std::isfinite(change) || p.norm_inf() > 1e12)
      throw Error(ErrorCode::InfeasibleGain, "Newton iteration diverged");
    if (residuals) residuals->push_back(riccati_residual(ss, p, gamma));
    if (change <= tol.newton_step * (1.0 + scale)) {
      converged = true;
      break;
    }
  }
  if (!converged)
    throw Error(ErrorCode::NoConvergence, "Newton-Kleinman did not converge");

  Certificate cert;
  cert.kind = CertificateKind::L2Gain;
  cert.p = p;
  cert.alpha = gamma;
  cert.residual = riccati_residual(ss, p, gamma);
  const auto lmi = semidefinite_check(dissipation_lmi_continuous(ss, p, gamma), tol.psd, tol);
  if (!lmi.psd)
    throw Error(ErrorCode::InfeasibleGain, "dissipation LMI refuted at gamma " + std::to_string(gamma));
  const bool ok = cholesky(p, tol).has_value() &&
                  cert.residual <= tol.riccati_residual * (1.0 + ctc.norm_inf());
  cert.status = ok ? CertificateStatus::Verified : CertificateStatus::Refuted;
  return cert;
}

Certificate discrete_bounded_real_certificate(const StateSpaceModel& ss, double alpha,
                                              const Tolerances& tol) {
  if (!ss.is_discrete())
    throw Error(ErrorCode::PreconditionViolation, "discrete storage needs a discrete model");
  require_strictly_proper(ss);
  const double h = *ss.sample_time;
  const std::size_t n = ss.n(), m = ss.m();
  const Matrix adt = ss.a.transpose();
  const Matrix hctc = matmul(ss.c.transpose(), ss.c) * h;

  for (double shrink : {1.01, 1.001, 1.0001}) {
    const double level = alpha / shrink;
    Matrix p(n, n);
    bool ok = true;
    bool converged = false;
    for (int it = 0; it < 200000 && ok; ++it) {
      const Matrix adt_p = matmul(adt, p);
      const Matrix bpb = matmul(matmul(ss.b.transpose(), p), ss.b);
      const Matrix gap = Matrix::identity(m) * (level * level * h) - bpb;
      if (!cholesky(gap, tol)) {
        ok = false;
        break;
      }
      const Matrix cross = matmul(adt_p, ss.b);
      Matrix next = matmul(adt_p, ss.a) + hctc + matmul(cross, lu_solve(gap, cross.transpose(), tol));
      next = average_symmetric(next);
      const double change = (next - p).norm_inf();
      p = std::move(next);
      if (!std::isfinite(change) || p.norm_inf() > 1e12) ok = false;
      if (change <= 1e-13 * (1.0 + p.norm_inf())) {
        converged = true;
        break;
      }
    }
    if (!ok || !converged) continue;
    Certificate cert;
    cert.kind = CertificateKind::L2Gain;
    cert.p = p;
    cert.alpha = alpha;
    cert = verify_certificate(ss, cert, tol);
    if (cert.verified()) return cert;
  }
  throw Error(ErrorCode::InfeasibleGain,
              "no discrete storage function found at level " + std::to_string(alpha));
}

Certificate verify_certificate(const StateSpaceModel& ss, const Certificate& cert,
                               const Tolerances& tol) {
  if (cert.p.rows() != ss.n() || cert.p.cols() != ss.n())
    throw Error(ErrorCode::DimensionMismatch,
                "certificate P is " + std::to_string(cert.p.rows()) + "x" +
                    std::to_string(cert.p.cols()) + ", model has " + std::to_string(ss.n()) +
                    " states");
  Certificate out = cert;
  auto refute = [&] {
    out.status = CertificateStatus::Refuted;
    return out;
  };
  if ((cert.p - cert.p.transpose()).norm_inf() > tol.symmetry * cert.p.norm_inf()) return refute();
  const Matrix p = average_symmetric(cert.p);
  if (!cholesky(p, tol)) return refute();

  switch (cert.kind) {
    case CertificateKind::LyapunovContinuous: {
      const Matrix lie = matmul(ss.a.transpose(), p) + matmul(p, ss.a);
      if (!cholesky(-lie, tol)) return refute();
      break;
    }
    case CertificateKind::LyapunovDiscrete: {
      const Matrix decrease = p - matmul(matmul(ss.a.transpose(), p), ss.a);
      if (!cholesky(decrease, tol)) return refute();
      break;
    }
    case CertificateKind::L2Gain: {
      require_strictly_proper(ss);
      if (!cert.alpha || !(*cert.alpha > 0.0)) return refute();
      const Matrix lmi = ss.is_discrete() ? dissipation_lmi_discrete(ss, p, *cert.alpha)
                                          : dissipation_lmi_continuous(ss, p, *cert.alpha);
      if (!semidefinite_check(lmi, tol.psd, tol).psd) return refute();
      break;
    }
  }
  out.status = CertificateStatus::Verified;
  return out;
}

}  // namespace proofblocks
