#include "ptl/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace ptl {

MarginReport k_margin(const Dictionary& dict, const Vector& x, const Vector& code, Index k,
                      double lambda) {
  const Index m = dict.size();
  if (k < 0 || k >= m) {
    throw ArgumentError("k_margin: need 0 <= k < m, got k = " + std::to_string(k));
  }
  if (!(lambda > 0)) throw ArgumentError("k_margin: lambda must be positive");
  if (x.size() != dict.dim()) throw DimensionError("k_margin: sample length mismatch");
  if (code.size() != m) throw DimensionError("k_margin: code length mismatch");

  MarginReport report;
  report.residual_correlations = (dict.atoms().transpose() * (x - dict.atoms() * code)).cwiseAbs();
  const Vector& corr = report.residual_correlations;

  std::vector<Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return corr(a) > corr(b); });

  report.margin = lambda - corr(order[static_cast<std::size_t>(k)]);
  report.maximizing_set.assign(order.begin() + k, order.end());
  std::sort(report.maximizing_set.begin(), report.maximizing_set.end());
  return report;
}

MarginReport k_margin(const Dictionary& dict, const Vector& x, Index k, double lambda,
                      const LassoOptions& options) {
  if (k < 0 || k >= dict.size()) {
    throw ArgumentError("k_margin: need 0 <= k < m, got k = " + std::to_string(k));
  }
  const SparseCode code = solve(LassoProblem(dict, x, lambda), options);
  return k_margin(dict, x, code.coefficients, k, lambda);
}

double permissible_radius(double margin, double x_norm, double lambda) {
  const double mg = std::max(0.0, margin);
  const double scale = std::max(1.0, x_norm);
  return mg * mg * lambda / (64.0 * std::pow(scale, 4));
}

double permissible_radius(const Dictionary& dict, const Vector& x, Index k, double lambda) {
  return permissible_radius(k_margin(dict, x, k, lambda).margin, x.norm(), lambda);
}

double stability_coefficient(double mu, Index d, double x_norm, Index k, double lambda) {
  const double kk = static_cast<double>(k);
  const double floor = 1.0 - mu * kk / std::sqrt(static_cast<double>(d));
  if (!(floor > 0)) {
    throw RegimeError("stability_coefficient: mu k / sqrt(d) = " + std::to_string(1.0 - floor) +
                      " is not below 1");
  }
  if (!(lambda > 0)) throw ArgumentError("stability_coefficient: lambda must be positive");
  return 4.0 * x_norm * x_norm * std::sqrt(kk) / (floor * lambda);
}

double stability_coefficient(const Dictionary& dict, const Vector& x, Index k, double lambda) {
  return stability_coefficient(mu_incoherence(dict).mu, dict.dim(), x.norm(), k, lambda);
}

double optimal_value_bound(double x_norm, double dist, double lambda) {
  return 0.5 * (1.0 + x_norm / 4.0) * std::pow(x_norm, 3) * dist / lambda;
}

double reconstructor_bound(double x_norm, double dist, double lambda) {
  return 2.0 * (3.0 * x_norm * x_norm + 9.0 * x_norm + 2.0) * x_norm * x_norm * dist / lambda;
}

double sparsity_threshold(double x_norm, double dist, double lambda) {
  return (1.0 + x_norm / lambda) * x_norm * dist +
         std::sqrt(reconstructor_bound(x_norm, dist, lambda));
}

namespace {

Vector orthogonal_unit(const Eigen::Ref<const Vector>& d, CounterRng& rng) {
  for (;;) {
    Vector g = Vector::NullaryExpr(d.size(), [&] { return rng.normal(); });
    g -= g.dot(d) * d;
    g -= g.dot(d) * d;
    const double n = g.norm();
    if (n > 1e-8) return g / n;
  }
}

}  // namespace

Dictionary perturb_dictionary(const Dictionary& dict, double eps, CounterRng& rng) {
  if (!(eps >= 0) || eps > 2.0) {
    throw ArgumentError("perturb_dictionary: eps must lie in [0, 2], got " + std::to_string(eps));
  }
  if (eps == 0.0) return dict;

  const Index m = dict.size();
  Matrix cols = dict.atoms();
  if (dict.dim() == 1) {
    // The only unit vectors in one dimension are +1 and -1.
    if (eps < 2.0) {
      throw ArgumentError("perturb_dictionary: with d = 1 only eps = 0 or eps = 2 is feasible");
    }
    return Dictionary(-cols);
  }

  // Keeps rounding in the distance from leaving the window.
  const double hi = eps * (1.0 - 1e-9);
  const auto pinned = static_cast<Index>(rng.below(static_cast<std::uint64_t>(m)));
  for (Index j = 0; j < m; ++j) {
    const double e = (j == pinned) ? rng.uniform(0.9 * eps * (1.0 + 1e-9), hi) : hi * rng.uniform();
    if (e == 0.0) continue;
    const Vector u = orthogonal_unit(cols.col(j), rng);
    // Great-circle step written as an increment so small e keeps full
    // relative precision: cos(theta) - 1 = -e^2/2, sin(theta) = e sqrt(1 - e^2/4).
    const Vector step = -(0.5 * e * e) * cols.col(j) + e * std::sqrt(std::max(0.0, 1.0 - 0.25 * e * e)) * u;
    cols.col(j) += step;
  }
  return Dictionary(cols);
}

bool StabilityReport::stability_violated() const {
  return ok() && within_regime && std::isfinite(bound_value) &&
         code_distance > bound_value + slack;
}

bool StabilityReport::sparsity_violated(Index k) const {
  return ok() && (within_regime || sparsity_hypothesis) && support_diff_size > k;
}

bool StabilityReport::value_violated() const {
  return ok() && within_lambda && value_gap > value_bound + slack;
}

bool StabilityReport::reconstructor_violated() const {
  return ok() && within_lambda && reconstructor_gap > reconstructor_bound + slack;
}


std::vector<StabilityReport> verify_stability(const Dictionary& dict,
                                              const std::vector<Vector>& samples, Index k,
                                              double lambda, const std::vector<double>& eps_grid,
                                              int trials, std::uint64_t seed,
                                              const StabilityOptions& options) {
  if (trials < 1) throw ArgumentError("verify_stability: trials must be at least 1");
  if (k < 0 || k >= dict.size()) throw ArgumentError("verify_stability: need 0 <= k < m");
  if (!(lambda > 0)) throw ArgumentError("verify_stability: lambda must be positive");
  for (const Vector& x : samples) {
    if (x.size() != dict.dim()) throw DimensionError("verify_stability: sample length mismatch");
  }

  const double mu = mu_incoherence(dict).mu;
  const double floor = 1.0 - mu * static_cast<double>(k) / std::sqrt(static_cast<double>(dict.dim()));
  const double m_root = std::sqrt(static_cast<double>(dict.size()));
  LassoOptions lasso;
  lasso.tol = options.tol;
  lasso.max_iter = options.max_iter;

  std::vector<StabilityReport> out;
  out.reserve(samples.size() * eps_grid.size() * static_cast<std::size_t>(trials));

  for (std::size_t s = 0; s < samples.size(); ++s) {
    const Vector& x = samples[s];
    const double x_norm = x.norm();

    StabilityReport base;
    base.sample_index = s;
    base.slack = 10.0 * m_root * options.tol * (1.0 + x_norm) * (1.0 + x_norm) /
                 (floor > 0 ? floor : 1e-3);
    Vector a;
    double v_d = 0.0;
    double coef = std::numeric_limits<double>::quiet_NaN();
    try {
      const SparseCode code = solve(LassoProblem(dict, x, lambda), lasso);
      a = code.coefficients;
      v_d = code.objective;
      base.margin = k_margin(dict, x, a, k, lambda).margin;
      base.permissible_radius = permissible_radius(base.margin, x_norm, lambda);
      if (floor > 0) coef = stability_coefficient(mu, dict.dim(), x_norm, k, lambda);
    } catch (const std::exception& e) {
      base.error = std::string("base solve: ") + e.what();
    }

    for (std::size_t e = 0; e < eps_grid.size(); ++e) {
      for (int t = 0; t < trials; ++t) {
        StabilityReport r = base;
        r.eps_index = e;
        r.trial = t;
        r.stream = options.stream_offset +
                   (s * eps_grid.size() + e) * static_cast<std::uint64_t>(trials) +
                   static_cast<std::uint64_t>(t);
        r.eps = options.mode == EpsMode::Absolute
                    ? eps_grid[e]
                    : eps_grid[e] * std::min(lambda, base.permissible_radius);
        if (!r.ok()) {
          out.push_back(std::move(r));
          continue;
        }
        try {
          CounterRng rng(seed, r.stream);
          const Dictionary perturbed = perturb_dictionary(dict, r.eps, rng);
          r.dict_distance = induced_norm_1_2(perturbed.atoms() - dict.atoms());
          const SparseCode moved = solve(LassoProblem(perturbed, x, lambda), lasso);
          const Vector diff = a - moved.coefficients;
          r.code_distance = diff.norm();
          r.bound_value = coef * r.dict_distance;
          r.support_diff_size = (diff.array().abs() > r.slack).count();
          r.within_lambda = r.dict_distance <= lambda;
          r.within_regime = floor > 0 && r.within_lambda &&
                            r.dict_distance <= base.permissible_radius;
          r.sparsity_hypothesis =
              base.margin > sparsity_threshold(x_norm, r.dict_distance, lambda);
          r.value_gap = std::abs(v_d - moved.objective);
          r.value_bound = optimal_value_bound(x_norm, r.dict_distance, lambda);
          r.reconstructor_gap = (dict.atoms() * diff).squaredNorm();
          r.reconstructor_bound = reconstructor_bound(x_norm, r.dict_distance, lambda);
        } catch (const std::exception& ex) {
          r.error = ex.what();
        }
        out.push_back(std::move(r));
      }
    }
  }
  return out;
}

StabilityTally tally(const std::vector<StabilityReport>& reports, Index k) {
  StabilityTally t;
  for (const StabilityReport& r : reports) {
    ++t.trials;
    if (!r.ok()) {
      ++t.failed;
      continue;
    }
    t.in_regime += r.within_regime;
    t.stability_violations += r.stability_violated();
    t.sparsity_violations += r.sparsity_violated(k);
    t.value_violations += r.value_violated();
    t.reconstructor_violations += r.reconstructor_violated();
  }
  return t;
}

}  // namespace ptl
