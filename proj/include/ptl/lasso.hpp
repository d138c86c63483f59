#pragma once

#include <optional>
#include <vector>

#include "ptl/core.hpp"

namespace ptl {

/// min_z 1/2 ||x - D z||^2 + lambda ||z||_1 for one sample.
class LassoProblem {
 public:
  LassoProblem(Dictionary dictionary, Vector x, double lambda);

  const Dictionary& dictionary() const noexcept { return dictionary_; }
  const Vector& sample() const noexcept { return x_; }
  double lambda() const noexcept { return lambda_; }

 private:
  Dictionary dictionary_;
  Vector x_;
  double lambda_;
};

struct SparseCode {
  Vector coefficients;
  std::vector<Index> support;  // indices with nonzero coefficient, ascending
  double kkt_residual = 0.0;
  double objective = 0.0;
  int iterations = 0;  // full coordinate sweeps
};

struct LassoOptions {
  double tol = 1e-10;
  int max_iter = 100000;
  std::optional<Vector> warm_start;
  /// Coordinate visiting order; empty means 0..m-1.
  std::vector<Index> order;
};

/// Cyclic coordinate descent with exact soft-threshold updates. Once the
/// sign pattern stops changing, the iterate is polished by solving the
/// restricted stationarity system on the current support; the polished point
/// is kept only if its KKT residual is smaller.
///
/// Returns when the KKT residual is at most `tol`. Throws ConvergenceError
/// after `max_iter` sweeps.
SparseCode solve(const LassoProblem& problem, const LassoOptions& options = {});
SparseCode solve(const LassoProblem& problem, double tol, int max_iter);

double objective(const LassoProblem& problem, const Eigen::Ref<const Vector>& z);

/// Largest violation of the LASSO optimality conditions at z:
///   |<d_j, x - Dz> - sign(z_j) lambda|  for z_j != 0,
///   max(0, |<d_j, x - Dz>| - lambda)   for z_j == 0.
double kkt_residual(const LassoProblem& problem, const Eigen::Ref<const Vector>& z);

/// |lambda ||a||_1 - <x - Da, Da>|, zero at an exact minimizer.
double subgradient_identity_gap(const LassoProblem& problem, const SparseCode& code);

double optimal_value(const LassoProblem& problem, const LassoOptions& options = {});

/// Scalar soft threshold sign(z) max(|z| - t, 0). Ties at |z| == t give 0.
inline double soft_threshold(double z, double t) noexcept {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

}  // namespace ptl
