#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "ptl/core.hpp"
#include "ptl/lasso.hpp"
#include "ptl/stats.hpp"

namespace ptl {

enum class NoiseFamily {
  Gaussian,        // N(0, (sigma/sqrt(d))^2) per coordinate
  BoundedUniform,  // U[-sigma/sqrt(d), sigma/sqrt(d)], sub-Gaussian with the same parameter
};

/// Draws a support of size k from [0, m). Must return distinct indices.
using SupportLaw = std::function<std::vector<Index>(Index m, Index k, CounterRng& rng)>;

/// x = D* a + xi with k-sparse a, |a_i| >= C on the support, and independent
/// sub-Gaussian noise with parameter sigma / sqrt(d) per coordinate.
struct GenModelParams {
  /// lambda defaults to d^(-tau).
  GenModelParams(Dictionary dictionary, Index k, double C, double sigma, double t, double tau,
                 std::optional<double> lambda = std::nullopt);

  Dictionary dictionary;
  Index k;
  double C;
  double amp_max;  // magnitudes are uniform on [C, amp_max]; defaults to 2C
  double sigma;
  double t;
  double tau;
  double lambda;
  double mu;  // incoherence of the dictionary, computed at construction
  NoiseFamily noise = NoiseFamily::Gaussian;
  SupportLaw support_law;  // empty means uniform over size-k subsets

  Index dim() const noexcept { return dictionary.dim(); }
  Index size() const noexcept { return dictionary.size(); }
};

struct RegimeFlags {
  bool dimension = false;       // d >= ((1 + 6/(1-t)) mu k)^2
  bool tau_range = false;       // 1/4 <= tau <= 1/2
  bool lambda_matches = false;  // lambda == d^(-tau) up to rounding
  bool lambda_upper = false;    // lambda <= (1 - mu k/sqrt(d)) C d / sqrt(k)
  bool incoherent = false;      // mu k / sqrt(d) < 1

  bool all() const noexcept {
    return dimension && tau_range && lambda_matches && lambda_upper && incoherent;
  }
};

RegimeFlags regime(const GenModelParams& params);

struct SampleDraw {
  Vector x;
  Vector a_true;
  Vector xi;  // stored as x - D* a_true, so the model identity holds bitwise
  std::vector<Index> support;
};

SampleDraw sample(const GenModelParams& params, CounterRng& rng);

enum class DeltaVariant {
  Summary,   // fourth term 8 sigma (d-k)/(sqrt(d) lambda) exp(-d lambda^2/(32 sigma^2))
  Detailed,  // fourth term 8 sigma (d-k)/(d lambda) exp(-d^2 lambda^2/(32 sigma^2))
};

struct DeltaInputs {
  Index d = 0;
  Index m = 0;
  Index k = 0;
  double C = 0.0;
  double sigma = 0.0;
  double t = 0.0;
  double mu = 0.0;
  double lambda = 0.0;
};

DeltaInputs delta_inputs(const GenModelParams& params);

/// The four summands of the failure probability, in printed order. With
/// sigma = 0 all four are 0. The third is +inf when mu k / sqrt(d) >= 1.
std::array<double, 4> delta_terms(const DeltaInputs& in, DeltaVariant variant = DeltaVariant::Summary);
double delta_failure_prob(const DeltaInputs& in, DeltaVariant variant = DeltaVariant::Summary);
double delta_failure_prob(const GenModelParams& params,
                          DeltaVariant variant = DeltaVariant::Summary);

struct MonteCarloOptions {
  bool require_regime = true;  // throw RegimeError unless the dimension condition holds
  double tol = 1e-10;
  int max_iter = 100000;
  std::uint64_t stream_offset = 0;
};

struct MarginTrial {
  std::size_t trial = 0;
  double margin = 0.0;  // NaN when the solve failed
  bool failed = false;  // margin < t lambda
  bool excluded = false;
};

struct MarginMonteCarlo {
  std::size_t trials = 0;
  std::size_t excluded = 0;  // solver failures, not counted as margin failures
  std::size_t failures = 0;
  std::optional<double> rate;  // failures / (trials - excluded); empty with no usable trials
  Interval wilson;
  double delta = 0.0;
  RegimeFlags regime;
  std::vector<MarginTrial> per_trial;
};

/// Trial i draws from stream stream_offset + i of `seed`.
MarginMonteCarlo margin_montecarlo(const GenModelParams& params, std::size_t trials,
                                   std::uint64_t seed, const MonteCarloOptions& options = {});

struct LemmaRate {
  std::size_t holds = 0;
  double rate = 0.0;
  double bound = 0.0;  // printed lower bound on the probability; may be negative
  double se = 0.0;     // binomial standard error at the bound
  bool within_tolerance = false;  // rate >= bound - 3 se
};

struct LemmaReport {
  std::size_t trials = 0;
  std::size_t excluded = 0;
  /// (i) lambda >= 2 ||D^T xi||_inf, (ii) ||a - phi|| <= 3 sqrt(k) lambda/(1 - mu k/sqrt(d)),
  /// (iii) sign(phi) = sign(a), (iv) |supp(a - phi)| <= k.
  std::array<LemmaRate, 4> lemmas;
  RegimeFlags regime;
  bool out_of_regime = false;
  double delta2 = 0.0;
  double delta3 = 0.0;
};

LemmaReport lemma_checks(const GenModelParams& params, std::size_t trials, std::uint64_t seed,
                         const MonteCarloOptions& options = {});

}  // namespace ptl
