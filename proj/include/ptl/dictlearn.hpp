#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ptl/core.hpp"
#include "ptl/lasso.hpp"

namespace ptl {

/// Column j of the aligned estimate is signs[j] * est.col(source[j]).
struct SignedPermutation {
  std::vector<Index> source;
  std::vector<double> signs;

  static SignedPermutation identity(Index m);
  bool valid(Index m) const;
  Matrix apply(const Matrix& est) const;
};

struct DictEstimate {
  explicit DictEstimate(Dictionary d) : dictionary(std::move(d)) {}

  Dictionary dictionary;
  std::size_t n_samples_used = 0;
  std::optional<double> error_to_truth;
  SignedPermutation alignment;
  /// Mean LASSO objective over the samples, before the first round and
  /// after each round. Empty for the oracle estimator.
  std::vector<double> objective_trace;
  std::vector<std::string> events;
};

struct AlignedError {
  double error = 0.0;
  SignedPermutation alignment;
};

/// Greedy signed matching: repeatedly pair the unmatched estimate and truth
/// columns with the largest |inner product| and flip the sign to agree. The
/// identity pairing with per-column best signs is also tried and the smaller
/// error kept, so the result never exceeds ||est - truth||_{1,2}. Not a global
/// optimum over signed permutations.
AlignedError dict_error(const Dictionary& est, const Dictionary& truth);

/// A unit-column dictionary at (1,2) distance in [0.9 target, target] from
/// truth, with identity alignment.
DictEstimate oracle_estimator(const Dictionary& truth, double target_error, CounterRng& rng);

struct LearnOptions {
  std::optional<Dictionary> initial;  // default: m distinct random samples
  std::optional<Dictionary> truth;    // when set, error_to_truth is filled in
  double tol = 1e-10;
  int max_iter = 100000;
};

/// Alternating minimization of the mean of 1/2||x - Dz||^2 + lambda||z||_1.
/// Each round updates every column exactly on the unit sphere with the codes
/// held fixed, then recodes all samples warm-started from the previous codes.
/// A column no sample uses is replaced by a sample drawn with probability
/// proportional to its squared residual, and the event is logged.
///
/// `samples` holds one sample per column.
DictEstimate learn_alternating(const Matrix& samples, Index m, double lambda, int rounds,
                               CounterRng& rng, const LearnOptions& options = {});

}  // namespace ptl
