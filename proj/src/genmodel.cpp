#include "ptl/genmodel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "ptl/stability.hpp"

namespace ptl {

GenModelParams::GenModelParams(Dictionary dict, Index k_, double C_, double sigma_, double t_,
                               double tau_, std::optional<double> lambda_)
    : dictionary(std::move(dict)),
      k(k_),
      C(C_),
      amp_max(2.0 * C_),
      sigma(sigma_),
      t(t_),
      tau(tau_),
      lambda(lambda_.value_or(std::pow(static_cast<double>(dictionary.dim()), -tau_))),
      mu(mu_incoherence(dictionary).mu) {
  if (k < 0 || k > dictionary.size()) {
    throw ArgumentError("GenModelParams: k must lie in [0, m], got " + std::to_string(k));
  }
  if (!(C > 0)) throw ArgumentError("GenModelParams: C must be positive");
  if (!(sigma >= 0) || !std::isfinite(sigma)) {
    throw ArgumentError("GenModelParams: sigma must be nonnegative");
  }
  if (!(t > 0 && t < 1)) throw ArgumentError("GenModelParams: t must lie in (0, 1)");
  if (!(tau > 0) || !std::isfinite(tau)) throw ArgumentError("GenModelParams: tau must be positive");
  if (!(lambda > 0) || !std::isfinite(lambda)) {
    throw ArgumentError("GenModelParams: lambda must be positive");
  }
}

RegimeFlags regime(const GenModelParams& p) {
  RegimeFlags f;
  const double d = static_cast<double>(p.dim());
  const double k = static_cast<double>(p.k);
  const double spread = (1.0 + 6.0 / (1.0 - p.t)) * p.mu * k;
  const double floor = 1.0 - p.mu * k / std::sqrt(d);
  f.dimension = d >= spread * spread;
  f.tau_range = p.tau >= 0.25 && p.tau <= 0.5;
  f.lambda_matches = std::abs(p.lambda - std::pow(d, -p.tau)) <= 1e-12 * p.lambda;
  f.incoherent = floor > 0;
  f.lambda_upper = p.k == 0 || p.lambda <= floor * p.C * d / std::sqrt(k);
  return f;
}

namespace {

std::vector<Index> uniform_support(Index m, Index k, CounterRng& rng) {
  std::vector<Index> idx(static_cast<std::size_t>(m));
  std::iota(idx.begin(), idx.end(), Index{0});
  for (Index i = 0; i < k; ++i) {
    const auto j = i + static_cast<Index>(rng.below(static_cast<std::uint64_t>(m - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  idx.resize(static_cast<std::size_t>(k));
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

SampleDraw sample(const GenModelParams& p, CounterRng& rng) {
  const Index d = p.dim();
  const Index m = p.size();
  SampleDraw s;
  s.support = p.support_law ? p.support_law(m, p.k, rng) : uniform_support(m, p.k, rng);
  if (static_cast<Index>(s.support.size()) > p.k) {
    throw ArgumentError("sample: support law returned more than k indices");
  }
  s.a_true = Vector::Zero(m);
  for (Index j : s.support) {
    if (j < 0 || j >= m || s.a_true(j) != 0.0) {
      throw ArgumentError("sample: support law returned an invalid or repeated index");
    }
    s.a_true(j) = rng.rademacher() * rng.uniform(p.C, p.amp_max);
  }

  const double scale = p.sigma / std::sqrt(static_cast<double>(d));
  Vector noise(d);
  for (Index i = 0; i < d; ++i) {
    noise(i) = p.noise == NoiseFamily::Gaussian ? scale * rng.normal()
                                                : rng.uniform(-scale, scale);
  }
  s.x = p.dictionary.atoms() * s.a_true + noise;
  s.xi = s.x - p.dictionary.atoms() * s.a_true;
  return s;
}

DeltaInputs delta_inputs(const GenModelParams& p) {
  return {p.dim(), p.size(), p.k, p.C, p.sigma, p.t, p.mu, p.lambda};
}

std::array<double, 4> delta_terms(const DeltaInputs& in, DeltaVariant variant) {
  if (!(in.lambda > 0)) throw ArgumentError("delta_terms: lambda must be positive");
  if (!(in.sigma >= 0)) throw ArgumentError("delta_terms: sigma must be nonnegative");
  if (in.sigma == 0.0) return {0.0, 0.0, 0.0, 0.0};

  const double d = static_cast<double>(in.d);
  const double m = static_cast<double>(in.m);
  const double k = static_cast<double>(in.k);
  const double s = in.sigma;
  const double s2 = s * s;
  const double lam = in.lambda;
  const double rd = std::sqrt(d);
  const double floor = 1.0 - in.mu * k / rd;

  std::array<double, 4> out{};
  out[0] = 2 * s / ((1 - in.t) * rd * lam) *
           std::exp(-(1 - in.t) * (1 - in.t) * d * lam * lam / (8 * s2));
  out[1] = 2 * s * m / (rd * lam) * std::exp(-d * lam * lam / (8 * s2));
  if (in.k == 0) {
    out[2] = 0.0;
  } else if (floor > 0) {
    out[2] = 4 * s * k / (in.C * std::sqrt(d * floor)) *
             std::exp(-in.C * in.C * d * floor / (8 * s2));
  } else {
    out[2] = std::numeric_limits<double>::infinity();
  }
  if (variant == DeltaVariant::Summary) {
    out[3] = 8 * s * (d - k) / (rd * lam) * std::exp(-d * lam * lam / (32 * s2));
  } else {
    out[3] = 8 * s * (d - k) / (d * lam) * std::exp(-d * d * lam * lam / (32 * s2));
  }
  return out;
}

double delta_failure_prob(const DeltaInputs& in, DeltaVariant variant) {
  const auto terms = delta_terms(in, variant);
  return terms[0] + terms[1] + terms[2] + terms[3];
}

double delta_failure_prob(const GenModelParams& params, DeltaVariant variant) {
  return delta_failure_prob(delta_inputs(params), variant);
}

namespace {

void check_dimension(const GenModelParams& p, const RegimeFlags& f, const MonteCarloOptions& o,
                     const char* who) {
  if (o.require_regime && !f.dimension) {
    throw RegimeError(std::string(who) + ": dimension condition d >= ((1 + 6/(1-t)) mu k)^2 fails (d = " +
                      std::to_string(p.dim()) + ", mu = " + std::to_string(p.mu) + ")");
  }
}

LassoOptions lasso_options(const MonteCarloOptions& o) {
  LassoOptions l;
  l.tol = o.tol;
  l.max_iter = o.max_iter;
  return l;
}

}  // namespace

MarginMonteCarlo margin_montecarlo(const GenModelParams& p, std::size_t trials,
                                   std::uint64_t seed, const MonteCarloOptions& options) {
  MarginMonteCarlo out;
  out.regime = regime(p);
  check_dimension(p, out.regime, options, "margin_montecarlo");
  if (p.k >= p.size()) throw ArgumentError("margin_montecarlo: need k < m");
  out.trials = trials;
  out.delta = delta_failure_prob(p);
  const LassoOptions lasso = lasso_options(options);
  const double threshold = p.t * p.lambda;

  out.per_trial.reserve(trials);
  for (std::size_t i = 0; i < trials; ++i) {
    MarginTrial tr;
    tr.trial = i;
    CounterRng rng(seed, options.stream_offset + i);
    const SampleDraw s = sample(p, rng);
    try {
      const SparseCode code = solve(LassoProblem(p.dictionary, s.x, p.lambda), lasso);
      tr.margin = k_margin(p.dictionary, s.x, code.coefficients, p.k, p.lambda).margin;
      tr.failed = tr.margin < threshold;
    } catch (const ConvergenceError&) {
      tr.margin = std::numeric_limits<double>::quiet_NaN();
      tr.excluded = true;
    }
    out.excluded += tr.excluded;
    out.failures += tr.failed;
    out.per_trial.push_back(tr);
  }
  const std::size_t used = trials - out.excluded;
  if (used > 0) {
    out.rate = static_cast<double>(out.failures) / static_cast<double>(used);
    out.wilson = wilson_interval(out.failures, used);
  }
  return out;
}

LemmaReport lemma_checks(const GenModelParams& p, std::size_t trials, std::uint64_t seed,
                         const MonteCarloOptions& options) {
  LemmaReport out;
  out.regime = regime(p);
  check_dimension(p, out.regime, options, "lemma_checks");
  out.out_of_regime = !out.regime.all();
  out.trials = trials;

  // The lemma statements use the detailed form of the support term.
  const auto terms = delta_terms(delta_inputs(p), DeltaVariant::Detailed);
  out.delta2 = terms[1];
  out.delta3 = terms[2] + terms[3];

  const LassoOptions lasso = lasso_options(options);
  const double k = static_cast<double>(p.k);
  const double floor = 1.0 - p.mu * k / std::sqrt(static_cast<double>(p.dim()));
  const double code_radius = floor > 0 ? 3.0 * std::sqrt(k) * p.lambda / floor
                                       : std::numeric_limits<double>::infinity();

  std::array<std::size_t, 4> holds{};
  for (std::size_t i = 0; i < trials; ++i) {
    CounterRng rng(seed, options.stream_offset + i);
    const SampleDraw s = sample(p, rng);
    Vector phi;
    try {
      phi = solve(LassoProblem(p.dictionary, s.x, p.lambda), lasso).coefficients;
    } catch (const ConvergenceError&) {
      ++out.excluded;
      continue;
    }
    const Vector diff = s.a_true - phi;
    const double noise_corr = (p.dictionary.atoms().transpose() * s.xi).cwiseAbs().maxCoeff();
    holds[0] += p.lambda >= 2.0 * noise_corr;
    holds[1] += diff.norm() <= code_radius;
    bool same_sign = true;
    for (Index j = 0; j < phi.size(); ++j) {
      same_sign = same_sign && ((phi(j) > 0) - (phi(j) < 0)) == ((s.a_true(j) > 0) - (s.a_true(j) < 0));
    }
    holds[2] += same_sign;
    holds[3] += (diff.array() != 0.0).count() <= p.k;
  }

  const std::array<double, 4> bounds{1.0 - out.delta2, 1.0 - out.delta2 - out.delta3,
                                     1.0 - out.delta3, 1.0 - out.delta3};
  const std::size_t used = trials - out.excluded;
  for (std::size_t l = 0; l < 4; ++l) {
    LemmaRate& r = out.lemmas[l];
    r.holds = holds[l];
    r.rate = used ? static_cast<double>(holds[l]) / static_cast<double>(used) : 0.0;
    r.bound = bounds[l];
    r.se = binomial_se(bounds[l], used);
    r.within_tolerance = used > 0 && r.rate >= r.bound - 3.0 * r.se;
  }
  return out;
}

}  // namespace ptl
