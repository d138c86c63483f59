// Runs the acceptance criteria end to end and prints one PASS/FAIL line per
// criterion. Every criterion builds a JSON body from its results; the last
// criterion runs the whole set again and compares the bodies byte for byte.
//
// Usage: ptl_acceptance [seed] [report path]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "oracles.hpp"
#include "ptl/core.hpp"
#include "ptl/dictlearn.hpp"
#include "ptl/genmodel.hpp"
#include "ptl/lasso.hpp"
#include "ptl/stability.hpp"
#include "ptl/stats.hpp"
#include "ptl/transfer.hpp"

using namespace ptl;
using json = nlohmann::ordered_json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
  json body = json::object();
};

char buf[512];

template <typename... A>
std::string fmt(const char* f, A... a) {
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

Vector gaussian_vector(Index n, CounterRng& rng) {
  return Vector::NullaryExpr(n, [&] { return rng.normal(); });
}

// 1. LASSO against sign-pattern enumeration.
Outcome lasso_oracle(std::uint64_t seed) {
  Outcome o;
  double worst = 0.0;
  std::vector<double> errors;
  for (int i = 0; i < 500; ++i) {
    CounterRng rng(seed, static_cast<std::uint64_t>(i));
    const Index m = 1 + static_cast<Index>(rng.below(3));
    // d >= m keeps the columns in general position so the minimizer is unique.
    const Index d = m + static_cast<Index>(rng.below(4));
    Dictionary dict = random_gaussian_dictionary(d, m, rng);
    const Vector x = gaussian_vector(d, rng);
    const double lambda = rng.uniform(0.01, 1.0) * (dict.atoms().transpose() * x).cwiseAbs().maxCoeff();
    const Vector ours = solve(LassoProblem(dict, x, lambda)).coefficients;
    const Vector ref = oracle::lasso_sign_enumeration(dict.atoms(), x, lambda);
    const double err = (ours - ref).norm();
    errors.push_back(err);
    worst = std::max(worst, err);
  }
  o.pass = worst <= 1e-6;
  o.detail = fmt("max l2 error %.3g over 500 problems (m <= 3)", worst);
  o.body["max_error"] = worst;
  o.body["errors"] = errors;
  return o;
}

// 2. KKT residual, subgradient identity and the l1 bound.
Outcome kkt_identity(std::uint64_t seed) {
  Outcome o;
  double kkt = 0.0, gap = 0.0;
  std::size_t l1_ok = 0;
  std::vector<double> objectives;
  for (int i = 0; i < 1000; ++i) {
    CounterRng rng(seed, static_cast<std::uint64_t>(i));
    const Index d = 1 + static_cast<Index>(rng.below(32));
    const Index m = 1 + static_cast<Index>(rng.below(48));
    Dictionary dict = random_gaussian_dictionary(d, m, rng);
    const Vector x = gaussian_vector(d, rng);
    const double lambda = rng.uniform(0.01, 1.2) * std::max(1e-3, (dict.atoms().transpose() * x).cwiseAbs().maxCoeff());
    const LassoProblem p(dict, x, lambda);
    const SparseCode c = solve(p);
    kkt = std::max(kkt, kkt_residual(p, c.coefficients));
    gap = std::max(gap, subgradient_identity_gap(p, c));
    l1_ok += lambda * c.coefficients.lpNorm<1>() <= 0.5 * x.squaredNorm();
    objectives.push_back(c.objective);
  }
  o.pass = kkt <= 1e-8 && gap <= 1e-7 && l1_ok == 1000;
  o.detail = fmt("max KKT %.3g, max subgradient gap %.3g, l1 bound %zu/1000", kkt, gap, l1_ok);
  o.body["max_kkt"] = kkt;
  o.body["max_subgradient_gap"] = gap;
  o.body["l1_bound_holds"] = l1_ok;
  o.body["objectives"] = objectives;
  return o;
}

// 3. Local stability of sparse codes within the permissible radius.
Outcome stability(std::uint64_t seed) {
  Outcome o;
  CounterRng rng(seed, 1u << 20);
  const Index d = 64, m = 12, k = 2;
  const double lambda = 0.1;
  Dictionary dict = random_gaussian_dictionary(d, m, rng);
  const double mu = mu_incoherence(dict).mu;
  std::vector<Vector> xs;
  while (xs.size() < 50) {
    // Two active atoms with moderate amplitude plus small noise.
    Vector a = Vector::Zero(m);
    const Index i = static_cast<Index>(rng.below(m));
    Index j = static_cast<Index>(rng.below(m - 1));
    if (j >= i) ++j;
    a(i) = rng.rademacher() * rng.uniform(0.3, 0.6);
    a(j) = rng.rademacher() * rng.uniform(0.3, 0.6);
    Vector x = dict.atoms() * a + 0.01 / std::sqrt(double(d)) * gaussian_vector(d, rng);
    if (x.norm() <= 1.0) xs.push_back(std::move(x));
  }
  StabilityOptions opts;
  opts.mode = EpsMode::RelativeToRadius;
  const std::vector<double> grid{0.1, 0.4, 0.7, 1.0};
  const auto reports = verify_stability(dict, xs, k, lambda, grid, 50, seed, opts);
  const StabilityTally t = tally(reports, k);
  std::vector<double> dist;
  for (const auto& r : reports) dist.push_back(r.code_distance);
  o.pass = mu * k / std::sqrt(double(d)) < 1 && t.trials >= 10000 && t.failed == 0 &&
           t.in_regime == t.trials && t.total_violations() == 0;
  o.detail = fmt("%zu trials, %zu in regime, %zu failed; violations: stability %zu, support %zu, "
                 "value %zu, reconstructor %zu",
                 t.trials, t.in_regime, t.failed, t.stability_violations, t.sparsity_violations,
                 t.value_violations, t.reconstructor_violations);
  o.body["mu"] = mu;
  o.body["trials"] = t.trials;
  o.body["in_regime"] = t.in_regime;
  o.body["violations"] = t.total_violations();
  o.body["code_distances"] = dist;
  return o;
}

// 4. Sorted-correlation margin against subset enumeration.
Outcome margin_identity(std::uint64_t seed) {
  Outcome o;
  std::size_t equal = 0;
  std::vector<double> margins;
  for (int i = 0; i < 200; ++i) {
    CounterRng rng(seed, static_cast<std::uint64_t>(i));
    const Index m = 2 + static_cast<Index>(rng.below(11));
    const Index d = 2 + static_cast<Index>(rng.below(16));
    const Index k = static_cast<Index>(rng.below(static_cast<std::uint64_t>(m)));
    Dictionary dict = random_gaussian_dictionary(d, m, rng);
    const Vector x = gaussian_vector(d, rng);
    const double lambda = rng.uniform(0.05, 1.0);
    const MarginReport r = k_margin(dict, x, k, lambda);
    const double ref = oracle::margin_by_subsets(r.residual_correlations, k, lambda);
    equal += r.margin == ref;
    margins.push_back(r.margin);
  }
  o.pass = equal == 200;
  o.detail = fmt("%zu/200 exact matches (m <= 12)", equal);
  o.body["matches"] = equal;
  o.body["margins"] = margins;
  return o;
}

// 5. Restricted eigenvalue lower bound by brute force.
Outcome restricted_eig(std::uint64_t seed) {
  Outcome o;
  std::size_t checks = 0, violations = 0, library_mismatch = 0;
  std::vector<double> values;
  for (int i = 0; i < 100; ++i) {
    CounterRng rng(seed, static_cast<std::uint64_t>(i));
    const Index m = 2 + static_cast<Index>(rng.below(7));
    const Index d = 4 + static_cast<Index>(rng.below(60));
    Dictionary dict = random_gaussian_dictionary(d, m, rng);
    const double sd = std::sqrt(double(d));
    const double mu = oracle::max_offdiag_pairs(dict.atoms()) * sd;
    for (Index k = 1; k <= m; ++k) {
      const double brute = oracle::restricted_min_sv2(dict.atoms(), k);
      const double lib = restricted_eigenvalue(dict, k);
      ++checks;
      violations += brute < 1.0 - mu * k / sd - 1e-12;
      library_mismatch += std::abs(brute - lib) > 1e-9;
      values.push_back(brute);
    }
  }
  o.pass = violations == 0 && library_mismatch == 0;
  o.detail = fmt("%zu (dictionary, k) pairs, %zu violations, %zu library mismatches", checks,
                 violations, library_mismatch);
  o.body["checks"] = checks;
  o.body["violations"] = violations;
  o.body["values"] = values;
  return o;
}

GenModelParams margin_point() {
  return GenModelParams(identity_hadamard_dictionary(1024, 32), 2, 1.0, 0.1, 0.5, 0.25);
}

// 6. Margin failure rate at d = 1024.
Outcome margin_mc(std::uint64_t seed) {
  Outcome o;
  const GenModelParams p = margin_point();
  const RegimeFlags f = regime(p);
  const MarginMonteCarlo mc = margin_montecarlo(p, 10000, seed);
  const double rate = mc.rate.value_or(1.0);
  const double limit = mc.delta + 3 * binomial_se(mc.delta, mc.trials - mc.excluded);
  o.pass = f.all() && mc.rate && rate <= limit;
  o.detail = fmt("regime %s, %zu failures in %zu trials (%zu excluded), rate %.3g <= delta %.3g + 3 se",
                 f.all() ? "ok" : "NOT met", mc.failures, mc.trials, mc.excluded, rate, mc.delta);
  std::vector<double> margins;
  for (const auto& t : mc.per_trial) margins.push_back(t.margin);
  o.body["delta"] = mc.delta;
  o.body["failures"] = mc.failures;
  o.body["excluded"] = mc.excluded;
  o.body["margins"] = margins;
  return o;
}

// 7. Concentration lemma rates.
Outcome lemmas(std::uint64_t seed) {
  Outcome o;
  const LemmaReport rep = lemma_checks(margin_point(), 10000, seed);
  bool all = !rep.out_of_regime;
  std::string d;
  json rates = json::array();
  for (std::size_t i = 0; i < 4; ++i) {
    const LemmaRate& l = rep.lemmas[i];
    all = all && l.within_tolerance;
    d += fmt("%s(%zu) %.4f >= %.4g", i ? ", " : "", i + 1, l.rate, l.bound);
    rates.push_back({{"holds", l.holds}, {"rate", l.rate}, {"bound", l.bound}, {"se", l.se}});
  }
  o.pass = all;
  o.detail = fmt("%zu trials; ", rep.trials) + d;
  o.body["rates"] = rates;
  o.body["delta2"] = rep.delta2;
  o.body["delta3"] = rep.delta3;
  return o;
}

// Shared target setting for the transfer criteria.
struct TransferSetting {
  GenModelParams gen{identity_hadamard_dictionary(64, 16), 2, 0.5, 0.05, 0.5, 0.25, 0.3};
  LabelRule rule;
  TransferSetting() {
    gen.amp_max = 0.6;
    rule.w_true = Vector::Zero(16);
    rule.w_true(0) = 0.6;
    rule.w_true(3) = -0.3;
    rule.w_true(11) = 0.4;
    rule.noise_bound = 0.05;
  }
};

std::vector<LabeledSample> labeled(const TransferSetting& s, std::size_t n, double lambda,
                                   CounterRng& rng) {
  std::vector<LabeledSample> data(n);
  for (auto& d : data) {
    d.x = draw_bounded(s.gen, 1.0, rng);
    d.y = s.rule.w_true.dot(feature_map(s.gen.dictionary, d.x, lambda)) +
          rng.uniform(-s.rule.noise_bound, s.rule.noise_bound);
  }
  return data;
}

// 8. w-stability at dictionary error 1e-4.
Outcome w_stability(std::uint64_t seed) {
  Outcome o;
  const TransferSetting s;
  const double lambda = s.gen.lambda;
  const TransferConfig cfg = make_transfer_config(Loss::absolute(), lambda, 1.0, 1.0, 0.1, 200);
  std::size_t in_regime = 0, holds = 0, skipped = 0;
  double worst_ratio = 0.0;
  std::vector<double> lhs;
  for (std::uint64_t stream = 0; in_regime < 100 && stream < 1000; ++stream) {
    CounterRng rng(seed, stream);
    const auto data = labeled(s, cfg.n, lambda, rng);
    const Dictionary hat = oracle_estimator(s.gen.dictionary, 1e-4, rng).dictionary;
    const WStabilityGap g = w_stability_gap(hat, s.gen.dictionary, data, cfg, s.gen.k);
    if (!g.in_regime) {
      ++skipped;
      continue;
    }
    ++in_regime;
    holds += g.lhs <= g.rhs;
    worst_ratio = std::max(worst_ratio, g.lhs / g.rhs);
    lhs.push_back(g.lhs);
  }
  o.pass = in_regime == 100 && holds == 100;
  o.detail = fmt("%zu/%zu in-regime datasets hold (%zu out of regime skipped), max lhs/rhs %.3g",
                 holds, in_regime, skipped, worst_ratio);
  o.body["holds"] = holds;
  o.body["skipped"] = skipped;
  o.body["lhs"] = lhs;
  return o;
}

// 9. Excess risk against the learning bound.
Outcome dominance(std::uint64_t seed) {
  Outcome o;
  const TransferSetting s;
  const TransferConfig cfg = make_transfer_config(Loss::absolute(), s.gen.lambda, 1.0, 1.0, 0.1, 200);
  const std::vector<double> errors{0.0, 1e-5, 1e-4};
  std::size_t runs = 0, dominated = 0, skipped = 0;
  double approx = 0.0, worst_excess = -1.0, ref_gap = 0.0;
  json per_run = json::array();
  for (std::uint64_t stream = 0; runs < 100 && stream < 1000; ++stream) {
    CounterRng rng(seed, stream);
    DictSource src;
    src.oracle_error = errors[runs % errors.size()];
    const ExperimentReport r = run_pipeline(s.gen, s.rule, cfg, src, rng);
    if (!r.in_regime) {
      ++skipped;
      continue;
    }
    ++runs;
    dominated += r.dominated();
    approx = std::max(approx, r.wstar_approx_error);
    ref_gap = std::max(ref_gap, r.reference_gap);
    worst_excess = std::max(worst_excess, r.excess);
    per_run.push_back({{"dict_error", r.dict_error},
                       {"excess", r.excess},
                       {"bound", r.bound.total},
                       {"wstar_approx_error", r.wstar_approx_error}});
  }
  o.pass = runs == 100 && dominated >= 95;
  o.detail = fmt("%zu/%zu in-regime runs dominated (%zu skipped), max excess %.3g, "
                 "w*_T approximation error <= %.3g (reference gap <= %.2g)",
                 dominated, runs, skipped, worst_excess, approx, ref_gap);
  o.body["dominated"] = dominated;
  o.body["runs"] = per_run;
  return o;
}

// 10. Failure probability along tau = 1/4 and tau = 1/2.
Outcome delta_contrast(std::uint64_t) {
  Outcome o;
  auto delta_at = [](Index d, double tau) {
    DeltaInputs in{d, 32, 2, 1.0, 0.1, 0.5, 1.0, std::pow(double(d), -tau)};
    return delta_failure_prob(in);
  };
  json rows = json::array();
  bool decreasing = true, subexp = true;
  double prev = std::numeric_limits<double>::infinity();
  double prev_rate = std::numeric_limits<double>::infinity();
  for (int e = 6; e <= 14; ++e) {
    const Index d = Index{1} << e;
    const double q = delta_at(d, 0.25);
    const double h = delta_at(d, 0.5);
    rows.push_back({{"d", d}, {"tau_quarter", q}, {"tau_half", h}});
    decreasing = decreasing && q < prev;
    // Sub-exponential: -log(delta) / d keeps shrinking as d grows.
    const double rate = -std::log(q) / double(d);
    if (e >= 8) subexp = subexp && rate < prev_rate;
    prev = q;
    prev_rate = rate;
  }
  const double q4096 = delta_at(4096, 0.25);
  const double h4096 = delta_at(4096, 0.5);
  o.pass = decreasing && subexp && q4096 < 1e-6 && h4096 > 1;
  o.detail = fmt("tau=1/4: delta(4096) = %.3g, decreasing %s, sub-exponential %s; tau=1/2: delta(4096) = %.4g",
                 q4096, decreasing ? "yes" : "no", subexp ? "yes" : "no", h4096);
  o.body["rows"] = rows;
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double time_limit;  // seconds; 0 for none
  std::function<Outcome(std::uint64_t)> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::uint64_t seed = argc > 1 ? std::stoull(argv[1]) : 20260101;
  const std::string report_path = argc > 2 ? argv[2] : "acceptance_report.jsonl";

  const std::vector<Criterion> criteria{
      {1, "lasso oracle", 10, lasso_oracle},
      {2, "KKT and subgradient identity", 0, kkt_identity},
      {3, "local stability", 300, stability},
      {4, "k-margin identity", 0, margin_identity},
      {5, "restricted eigenvalue", 0, restricted_eig},
      {6, "margin Monte Carlo", 600, margin_mc},
      {7, "lemma rates", 0, lemmas},
      {8, "w-stability", 0, w_stability},
      {9, "learning bound dominance", 0, dominance},
      {10, "delta regime contrast", 0, delta_contrast},
  };

  std::ofstream report(report_path);
  std::vector<std::string> bodies;
  bool all = true;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run(seed);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("threw: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.time_limit > 0 && secs >= c.time_limit) {
      o.pass = false;
      o.detail += fmt(" [over the %.0f s limit]", c.time_limit);
    }
    json line = json::object();
    line["criterion"] = c.id;
    line["seed"] = seed;
    line["pass"] = o.pass;
    line["result"] = o.body;
    bodies.push_back(line.dump());
    report << bodies.back() << '\n';
    all = all && o.pass;
    std::cout << "criterion " << c.id << " (" << c.name << "): " << (o.pass ? "PASS" : "FAIL")
              << ": " << o.detail << fmt(" [%.1f s]", secs) << std::endl;
  }

  // 11. Same seed, same bodies.
  std::size_t same = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].run(seed);
    } catch (const std::exception& e) {
      o.detail = e.what();
    }
    json line = json::object();
    line["criterion"] = criteria[i].id;
    line["seed"] = seed;
    line["pass"] = o.pass;
    line["result"] = o.body;
    same += line.dump() == bodies[i];
  }
  const bool det = same == criteria.size();
  all = all && det;
  std::cout << "criterion 11 (determinism): " << (det ? "PASS" : "FAIL") << ": " << same << "/"
            << criteria.size() << " report bodies identical on rerun" << std::endl;
  return all ? 0 : 1;
}
