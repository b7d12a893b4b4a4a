#include "proofblocks/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "proofblocks/annotator.hpp"
#include "proofblocks/errors.hpp"
#include "proofblocks/extraction.hpp"
#include "proofblocks/graph.hpp"
#include "proofblocks/linalg.hpp"

namespace proofblocks {

namespace {

std::vector<std::size_t> permutation(const ModelGraph& g, const StateSpaceModel& ss,
                                     const AnnotationSpec& spec) {
  auto perm = state_permutation(ss, resolve_states(g, spec));
  if (!perm)
    throw Error(ErrorCode::PreconditionViolation,
                std::string(to_string(spec.kind)) +
                    " annotation states are not the state vector of the model");
  return *perm;
}

Certificate in_state_order(Certificate c, const std::vector<std::size_t>& perm) {
  c.p = to_state_order(c.p, perm);
  return c;
}

Certificate in_annotation_order(Certificate c, const std::vector<std::size_t>& perm) {
  c.p = to_annotation_order(c.p, perm);
  return c;
}

// Storage with slack: solves the Riccati equation for the output [C; sqrt(e) I]
// so that the dissipation inequality holds with margin e |x|^2, which keeps it
// valid after sampling. Falls back to smaller e, then to the tight solution.
Certificate strict_bounded_real(const StateSpaceModel& ss, double alpha, const Tolerances& tol) {
  const double scale = std::max(1.0, matmul(ss.c.transpose(), ss.c).norm_inf());
  for (double eps : {1e-2, 1e-3, 1e-4}) {
    StateSpaceModel aug = ss;
    aug.c = Matrix(ss.p() + ss.n(), ss.n());
    aug.c.set_block(0, 0, ss.c);
    aug.c.set_block(ss.p(), 0, Matrix::identity(ss.n()) * std::sqrt(eps * scale));
    aug.d = Matrix(aug.c.rows(), ss.m());
    try {
      Certificate c = verify_certificate(ss, bounded_real_certificate(aug, alpha, tol), tol);
      if (c.verified()) return c;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::InfeasibleGain && e.code() != ErrorCode::NoConvergence) throw;
    }
  }
  return bounded_real_certificate(ss, alpha, tol);
}

}  // namespace

std::vector<std::optional<Certificate>> certify_annotations(const ModelGraph& g,
                                                            const std::vector<AnnotationSpec>& specs,
                                                            const CertifyOptions& options,
                                                            const Tolerances& tol) {
  const ModelGraph exec = subgraph(g, Region::Executable);
  std::vector<std::optional<Certificate>> out;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const AnnotationSpec& spec = specs[i];
    auto imported = options.imported.find(i);
    const Certificate* given = imported == options.imported.end() ? nullptr : &imported->second;

    if (spec.kind == AnnotationKind::Stability) {
      const StateSpaceModel ss = extract_state_space(exec);
      const auto perm = permutation(g, ss, spec);
      const auto kind = g.is_discrete() ? CertificateKind::LyapunovDiscrete
                                        : CertificateKind::LyapunovContinuous;
      Certificate cand;
      if (given) {
        cand = in_state_order(*given, perm);
      } else if (spec.p) {
        cand = in_state_order(Certificate{kind, *spec.p, std::nullopt}, perm);
      } else {
        const Matrix q = options.q.empty() ? Matrix::identity(ss.n()) : options.q;
        cand = g.is_discrete() ? solve_lyapunov_discrete(ss.a, q, tol)
                               : solve_lyapunov_continuous(ss.a, q, tol);
      }
      if (cand.kind != kind) {
        cand.status = CertificateStatus::Refuted;
        out.emplace_back(in_annotation_order(cand, perm));
        continue;
      }
      out.emplace_back(in_annotation_order(verify_certificate(ss, cand, tol), perm));
    } else if (spec.kind == AnnotationKind::L2Gain) {
      if (!spec.w) throw Error(ErrorCode::MissingNoiseInput, "L2 annotation needs a noise input w");
      if (!spec.y) throw Error(ErrorCode::UnresolvedWire, "L2 annotation needs an output y");
      const StateSpaceModel ss =
          select_inputs(extract_state_space(exec, {*spec.y}), {spec.w->block});
      const auto perm = permutation(g, ss, spec);
      std::optional<double> alpha = spec.alpha;
      if (given && given->alpha) alpha = given->alpha;
      if (!alpha) {
        if (g.is_discrete())
          throw Error(ErrorCode::PreconditionViolation, "discrete L2 annotation needs alpha");
        alpha = options.gamma_margin * hinf_norm_estimate(ss, tol);
      }
      Certificate cand;
      if (given) {
        cand = in_state_order(*given, perm);
        cand.alpha = alpha;
      } else if (spec.p) {
        cand = in_state_order(Certificate{CertificateKind::L2Gain, *spec.p, alpha}, perm);
      } else {
        cand = g.is_discrete() ? discrete_bounded_real_certificate(ss, *alpha, tol)
                               : strict_bounded_real(ss, *alpha, tol);
      }
      if (cand.kind != CertificateKind::L2Gain) {
        cand.status = CertificateStatus::Refuted;
        out.emplace_back(in_annotation_order(cand, perm));
        continue;
      }
      out.emplace_back(in_annotation_order(verify_certificate(ss, cand, tol), perm));
    } else {
      out.emplace_back(std::nullopt);
    }
  }
  return out;
}

}  // namespace proofblocks
