#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ptl/core.hpp"
#include "ptl/lasso.hpp"

namespace ptl {

struct MarginReport {
  double margin = 0.0;
  /// The m - k indices that remain after dropping the k largest correlations.
  std::vector<Index> maximizing_set;
  Vector residual_correlations;  // |<d_j, x - D phi_D(x)>|
};

/// k-margin of D on x: lambda minus the (k+1)-th largest residual correlation.
/// Ties in the ordering are broken by index so the set is deterministic.
MarginReport k_margin(const Dictionary& dict, const Vector& x, Index k, double lambda,
                      const LassoOptions& options = {});

/// Same, reusing an already computed code for x.
MarginReport k_margin(const Dictionary& dict, const Vector& x, const Vector& code, Index k,
                      double lambda);

/// margin^2 lambda / (64 max(1, ||x||_2)^4), with negative margins read as 0.
double permissible_radius(double margin, double x_norm, double lambda);
double permissible_radius(const Dictionary& dict, const Vector& x, Index k, double lambda);

/// 4 ||x||^2 sqrt(k) / ((1 - mu k / sqrt(d)) lambda). Throws RegimeError when
/// mu k / sqrt(d) >= 1.
double stability_coefficient(double mu, Index d, double x_norm, Index k, double lambda);
double stability_coefficient(const Dictionary& dict, const Vector& x, Index k, double lambda);

/// 1/2 (1 + ||x||/4) ||x||^3 eps / lambda
double optimal_value_bound(double x_norm, double dist, double lambda);
/// 2 (3||x||^2 + 9||x|| + 2) ||x||^2 eps / lambda
double reconstructor_bound(double x_norm, double dist, double lambda);
/// Right-hand side of the sparsity-preservation hypothesis; the margin must
/// exceed it strictly.
double sparsity_threshold(double x_norm, double dist, double lambda);

/// Rotates each column along a great circle toward an independent random
/// orthogonal direction. Column j moves by exactly e_j in Euclidean distance,
/// with e_j ~ eps U(0, 1) except for one random column drawn from
/// eps U(0.9, 1), so the (1,2) distance lands in [0.9 eps, eps].
/// In d = 1 the only feasible nonzero eps is 2, which negates every column.
Dictionary perturb_dictionary(const Dictionary& dict, double eps, CounterRng& rng);

struct StabilityReport {
  std::size_t sample_index = 0;
  std::size_t eps_index = 0;
  int trial = 0;
  std::uint64_t stream = 0;
  double eps = 0.0;  // requested perturbation size

  double margin = 0.0;
  double permissible_radius = 0.0;
  double dict_distance = 0.0;
  double code_distance = 0.0;
  double bound_value = 0.0;  // NaN when mu k / sqrt(d) >= 1
  Index support_diff_size = 0;
  bool within_lambda = false;  // dict_distance <= lambda
  bool within_regime = false;
  bool sparsity_hypothesis = false;

  double value_gap = 0.0;
  double value_bound = 0.0;
  double reconstructor_gap = 0.0;
  double reconstructor_bound = 0.0;

  /// Allowance for solver tolerance added to every comparison.
  double slack = 0.0;
  std::string error;  // nonempty when the trial failed

  bool ok() const noexcept { return error.empty(); }
  bool stability_violated() const;
  bool sparsity_violated(Index k) const;
  bool value_violated() const;
  bool reconstructor_violated() const;
};

enum class EpsMode {
  Absolute,
  RelativeToRadius,  // eps_grid entries multiply min(lambda, permissible radius)
};

struct StabilityOptions {
  EpsMode mode = EpsMode::Absolute;
  double tol = 1e-12;
  int max_iter = 200000;
  /// Added to every trial's stream index, so several calls can share a seed
  /// without reusing streams.
  std::uint64_t stream_offset = 0;
};

/// One report per (sample, eps, trial), ordered by sample, then eps, then
/// trial. Trial t of grid point e on sample s draws from stream
/// stream_offset + (s * |grid| + e) * trials + t of `seed`. Failures are
/// recorded in the report and do not stop the batch.
std::vector<StabilityReport> verify_stability(const Dictionary& dict,
                                              const std::vector<Vector>& samples, Index k,
                                              double lambda, const std::vector<double>& eps_grid,
                                              int trials, std::uint64_t seed,
                                              const StabilityOptions& options = {});

struct StabilityTally {
  std::size_t trials = 0;
  std::size_t failed = 0;
  std::size_t in_regime = 0;
  std::size_t stability_violations = 0;
  std::size_t sparsity_violations = 0;
  std::size_t value_violations = 0;
  std::size_t reconstructor_violations = 0;

  std::size_t total_violations() const noexcept {
    return stability_violations + sparsity_violations + value_violations +
           reconstructor_violations;
  }
};

StabilityTally tally(const std::vector<StabilityReport>& reports, Index k);

}  // namespace ptl
