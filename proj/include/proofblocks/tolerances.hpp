#pragma once

#include <atomic>
#include <memory>

namespace proofblocks {

// Default numeric tolerances. Every operation that uses one accepts an
// override; PROOFBLOCKS_TOLERANCE_SCALE multiplies all of them.
struct Tolerances {
  double lu_pivot = 1e-12;
  double symmetry = 1e-6;
  double psd = 1e-8;
  double eig_relative = 1e-9;
  double lyapunov_residual = 1e-8;
  double newton_step = 1e-10;
  double riccati_residual = 1e-7;
  double golden_step = 1e-6;
  double assert_absolute = 1e-9;
  double assert_rate = 1e-6;

  int eig_max_iterations = 500;
  int newton_max_iterations = 100;

  Tolerances scaled(double factor) const;
  static Tolerances from_environment();
};

// Cooperative cancellation for long-running solves and simulations.
class CancellationToken {
 public:
  CancellationToken() : flag_(std::make_shared<std::atomic<bool>>(false)) {}

  void cancel() const { flag_->store(true); }
  bool cancelled() const { return flag_->load(); }
  // Throws Error(Cancelled) when cancelled.
  void check() const;

 private:
  std::shared_ptr<std::atomic<bool>> flag_;
};

}  // namespace proofblocks
