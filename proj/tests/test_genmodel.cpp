#include <doctest.h>

#include <cmath>

#include "ptl/genmodel.hpp"
#include "ptl/stability.hpp"

using namespace ptl;

namespace {

// Written out separately from the library, summing in log space.
double delta_reference(double d, double m, double k, double C, double s, double t, double mu,
                       double lam) {
  const double f = 1 - mu * k / std::sqrt(d);
  const double l1 = std::log(2 * s / ((1 - t) * std::sqrt(d) * lam)) - std::pow((1 - t) * lam / s, 2) * d / 8;
  const double l2 = std::log(2 * s * m / (std::sqrt(d) * lam)) - d * lam * lam / (8 * s * s);
  const double l3 = std::log(4 * s * k / (C * std::sqrt(d * f))) - C * C * d * f / (8 * s * s);
  const double l4 = std::log(8 * s * (d - k) / (std::sqrt(d) * lam)) - d * lam * lam / (32 * s * s);
  return std::exp(l1) + std::exp(l2) + std::exp(l3) + std::exp(l4);
}

}  // namespace

TEST_CASE("GenModelParams validation and defaults") {
  Dictionary dict = identity_hadamard_dictionary(16, 8);
  GenModelParams p(dict, 2, 1.0, 0.1, 0.5, 0.25);
  CHECK(p.lambda == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(p.amp_max == 2.0);
  CHECK(p.mu == doctest::Approx(1.0).epsilon(1e-14));
  CHECK_THROWS_AS(GenModelParams(dict, 9, 1.0, 0.1, 0.5, 0.25), ArgumentError);
  CHECK_THROWS_AS(GenModelParams(dict, 2, 0.0, 0.1, 0.5, 0.25), ArgumentError);
  CHECK_THROWS_AS(GenModelParams(dict, 2, 1.0, -0.1, 0.5, 0.25), ArgumentError);
  CHECK_THROWS_AS(GenModelParams(dict, 2, 1.0, 0.1, 1.0, 0.25), ArgumentError);

  RegimeFlags f = regime(p);
  CHECK_FALSE(f.dimension);  // 16 < (13 * 2)^2
  CHECK(f.tau_range);
  CHECK(f.lambda_matches);
  CHECK(f.incoherent);
  CHECK(f.lambda_upper);
  GenModelParams off(dict, 2, 1.0, 0.1, 0.5, 0.25, 0.3);
  CHECK_FALSE(regime(off).lambda_matches);
}

TEST_CASE("sample satisfies the model identity bitwise") {
  CounterRng rng(1);
  GenModelParams p(random_gaussian_dictionary(24, 40, rng), 3, 0.7, 0.3, 0.5, 0.25);
  for (int i = 0; i < 500; ++i) {
    const SampleDraw s = sample(p, rng);
    const Vector gap = s.x - p.dictionary.atoms() * s.a_true - s.xi;
    CHECK((gap.array() == 0.0).all());
    CHECK(s.support.size() == 3);
    CHECK(std::is_sorted(s.support.begin(), s.support.end()));
    for (Index j : s.support) {
      CHECK(std::abs(s.a_true(j)) >= 0.7);
      CHECK(std::abs(s.a_true(j)) <= 1.4);
    }
    CHECK((s.a_true.array() != 0.0).count() == 3);
  }
}

TEST_CASE("noiseless and empty-support draws") {
  CounterRng rng(2);
  Dictionary ortho = random_orthonormal_dictionary(16, 8, rng);
  GenModelParams quiet(ortho, 2, 1.2, 0.0, 0.5, 0.25);
  for (int i = 0; i < 50; ++i) {
    const SampleDraw s = sample(quiet, rng);
    CHECK(s.xi.isZero(0.0));
    const SparseCode code = solve(LassoProblem(ortho, s.x, quiet.lambda));
    for (Index j = 0; j < 8; ++j) {
      CHECK((code.coefficients(j) > 0) == (s.a_true(j) > 0));
      CHECK((code.coefficients(j) < 0) == (s.a_true(j) < 0));
    }
  }
  GenModelParams empty(ortho, 0, 1.0, 0.5, 0.5, 0.25);
  const SampleDraw s = sample(empty, rng);
  CHECK(s.a_true.isZero(0.0));
  CHECK(s.support.empty());
  CHECK((s.x.array() == s.xi.array()).all());
}

TEST_CASE("custom support law") {
  CounterRng rng(3);
  GenModelParams p(identity_hadamard_dictionary(8, 8), 2, 1.0, 0.0, 0.5, 0.25);
  p.support_law = [](Index, Index, CounterRng&) { return std::vector<Index>{1, 6}; };
  const SampleDraw s = sample(p, rng);
  CHECK(s.support == std::vector<Index>{1, 6});
  CHECK(s.a_true(1) != 0.0);
  CHECK(s.a_true(6) != 0.0);
  p.support_law = [](Index, Index, CounterRng&) { return std::vector<Index>{3, 3}; };
  CHECK_THROWS_AS(sample(p, rng), ArgumentError);
}

TEST_CASE("per-coordinate noise variance is sigma^2/d") {
  CounterRng rng(4);
  const Index d = 8;
  const double sigma = 0.4;
  const double target = sigma * sigma / d;
  for (NoiseFamily fam : {NoiseFamily::Gaussian, NoiseFamily::BoundedUniform}) {
    GenModelParams p(identity_hadamard_dictionary(d, 4), 0, 1.0, sigma, 0.5, 0.25);
    p.noise = fam;
    const std::size_t draws = 100000;
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t i = 0; i < draws; ++i) {
      const SampleDraw s = sample(p, rng);
      sum += s.xi(0);
      sum2 += s.xi(0) * s.xi(0);
    }
    const double n = static_cast<double>(draws);
    const double var = sum2 / n - (sum / n) * (sum / n);
    if (fam == NoiseFamily::Gaussian) {
      // Var of the sample variance is 2 s^4 / n for a normal.
      CHECK(std::abs(var - target) <= 3.0 * target * std::sqrt(2.0 / n));
    } else {
      // Uniform on [-b, b]: variance b^2/3, fourth central moment b^4/5.
      const double b2 = target;
      const double v = b2 / 3.0;
      const double se = std::sqrt((b2 * b2 / 5.0 - v * v) / n);
      CHECK(std::abs(var - v) <= 3.0 * se);
    }
  }
}

TEST_CASE("delta_failure_prob") {
  DeltaInputs in{256, 16, 2, 1.0, 0.1, 0.5, 1.0, 0.25};
  const double delta = delta_failure_prob(in);
  CHECK(delta == doctest::Approx(delta_reference(256, 16, 2, 1.0, 0.1, 0.5, 1.0, 0.25)).epsilon(1e-12));
  CHECK(delta == doctest::Approx(9.817336726e-21).epsilon(1e-8));
  const auto terms = delta_terms(in);
  CHECK(terms[3] > 0.99 * delta);

  DeltaInputs zero = in;
  zero.sigma = 0.0;
  CHECK(delta_failure_prob(zero) == 0.0);

  DeltaInputs half = in;
  half.lambda = 1.0 / 16.0;
  CHECK(delta_failure_prob(half) >= 1.0);

  const auto app = delta_terms(in, DeltaVariant::Detailed);
  CHECK(app[0] == terms[0]);
  CHECK(app[1] == terms[1]);
  CHECK(app[2] == terms[2]);
  CHECK(app[3] == doctest::Approx(8 * 0.1 * 254 / (256 * 0.25) *
                                  std::exp(-256.0 * 256.0 * 0.0625 / (32 * 0.01))));

  DeltaInputs bad = in;
  bad.mu = 9.0;
  CHECK(std::isinf(delta_failure_prob(bad)));
  bad.lambda = 0.0;
  CHECK_THROWS_AS(delta_failure_prob(bad), ArgumentError);
}

TEST_CASE("delta is nonincreasing in d along tau = 1/4") {
  double prev = std::numeric_limits<double>::infinity();
  for (int e = 6; e <= 16; ++e) {
    const Index d = Index{1} << e;
    DeltaInputs in{d, 32, 2, 1.0, 0.1, 0.5, 1.0, std::pow(static_cast<double>(d), -0.25)};
    const double delta = delta_failure_prob(in);
    CHECK(delta <= prev);
    prev = delta;
  }
}

TEST_CASE("margin_montecarlo") {
  CounterRng rng(5);
  Dictionary ortho = random_orthonormal_dictionary(16, 8, rng);
  GenModelParams quiet(ortho, 2, 1.2, 0.0, 0.5, 0.25);
  auto mc = margin_montecarlo(quiet, 300, 9);
  REQUIRE(mc.rate.has_value());
  CHECK(*mc.rate == 0.0);
  CHECK(mc.failures == 0);
  CHECK(mc.wilson.lo == 0.0);
  CHECK(mc.wilson.hi < 0.02);
  for (const auto& t : mc.per_trial) CHECK(t.margin == doctest::Approx(quiet.lambda).epsilon(1e-9));

  auto none = margin_montecarlo(quiet, 0, 9);
  CHECK_FALSE(none.rate.has_value());
  CHECK(none.per_trial.empty());

  GenModelParams tight(identity_hadamard_dictionary(16, 8), 2, 1.0, 0.1, 0.5, 0.25);
  CHECK_THROWS_AS(margin_montecarlo(tight, 10, 1), RegimeError);
  MonteCarloOptions loose;
  loose.require_regime = false;
  CHECK_NOTHROW(margin_montecarlo(tight, 10, 1, loose));

  // Trial i is stream i: a slice with an offset reproduces the tail.
  GenModelParams noisy(ortho, 2, 1.0, 0.5, 0.5, 0.25);
  auto full = margin_montecarlo(noisy, 20, 3);
  MonteCarloOptions shifted;
  shifted.stream_offset = 10;
  auto tail = margin_montecarlo(noisy, 10, 3, shifted);
  for (std::size_t i = 0; i < 10; ++i) CHECK(tail.per_trial[i].margin == full.per_trial[10 + i].margin);
}

TEST_CASE("lemma_checks") {
  CounterRng rng(6);
  Dictionary ortho = random_orthonormal_dictionary(16, 8, rng);
  SUBCASE("noiseless: every lemma holds on every trial") {
    GenModelParams quiet(ortho, 2, 1.2, 0.0, 0.5, 0.25);
    auto rep = lemma_checks(quiet, 200, 4);
    CHECK_FALSE(rep.out_of_regime);
    for (const auto& l : rep.lemmas) {
      CHECK(l.rate == 1.0);
      CHECK(l.within_tolerance);
    }
  }
  SUBCASE("lambda far below the noise level") {
    Dictionary wide = random_orthonormal_dictionary(64, 16, rng);
    GenModelParams loud(wide, 2, 1.0, 1.0, 0.5, 0.25, 0.05);
    auto rep = lemma_checks(loud, 200, 4);
    CHECK(rep.out_of_regime);
    CHECK(rep.lemmas[0].rate < 0.5);
  }
}
