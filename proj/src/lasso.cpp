#include "ptl/lasso.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace ptl {

namespace {

double sign_of(double v) noexcept { return (v > 0) - (v < 0); }

std::vector<Index> support_of(const Vector& a) {
  std::vector<Index> s;
  for (Index i = 0; i < a.size(); ++i) {
    if (a(i) != 0.0) s.push_back(i);
  }
  return s;
}

double kkt_from_correlations(const Vector& corr, const Vector& a, double lambda) {
  double worst = 0.0;
  for (Index j = 0; j < a.size(); ++j) {
    const double v = a(j) != 0.0 ? std::abs(corr(j) - sign_of(a(j)) * lambda)
                                 : std::max(0.0, std::abs(corr(j)) - lambda);
    worst = std::max(worst, v);
  }
  return worst;
}

// Correlations <d_j, x - Da> evaluated from the residual, not from the Gram.
Vector residual_correlations(const Dictionary& dict, const Vector& x, const Vector& a) {
  return dict.atoms().transpose() * (x - dict.atoms() * a);
}

bool same_pattern(const Vector& a, const std::vector<signed char>& pattern) {
  for (Index i = 0; i < a.size(); ++i) {
    if (static_cast<signed char>(sign_of(a(i))) != pattern[static_cast<std::size_t>(i)]) {
      return false;
    }
  }
  return true;
}

// Solves G_SS a_S = c_S - lambda sign(a_S) on the current support. Returns
// false if the system is singular or a sign flips.
bool polish(const Matrix& gram, const Vector& c, double lambda, const Vector& a, Vector& out) {
  std::vector<Index> s = support_of(a);
  if (s.empty()) return false;
  const auto k = static_cast<Index>(s.size());
  Matrix g(k, k);
  Vector rhs(k);
  for (Index p = 0; p < k; ++p) {
    rhs(p) = c(s[p]) - lambda * sign_of(a(s[p]));
    for (Index q = 0; q < k; ++q) g(p, q) = gram(s[p], s[q]);
  }
  Eigen::LDLT<Matrix> ldlt(g);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 1e-14)) return false;
  const Vector sol = ldlt.solve(rhs);
  out = Vector::Zero(a.size());
  for (Index p = 0; p < k; ++p) {
    if (sign_of(sol(p)) != sign_of(a(s[p]))) return false;
    out(s[p]) = sol(p);
  }
  return true;
}

}  // namespace

LassoProblem::LassoProblem(Dictionary dictionary, Vector x, double lambda)
    : dictionary_(std::move(dictionary)), x_(std::move(x)), lambda_(lambda) {
  if (x_.size() != dictionary_.dim()) {
    throw DimensionError("LassoProblem: sample length " + std::to_string(x_.size()) +
                         " does not match dictionary dimension " +
                         std::to_string(dictionary_.dim()));
  }
  if (!(lambda_ > 0) || !std::isfinite(lambda_)) {
    throw ArgumentError("LassoProblem: lambda must be positive and finite");
  }
}

double objective(const LassoProblem& problem, const Eigen::Ref<const Vector>& z) {
  if (z.size() != problem.dictionary().size()) {
    throw DimensionError("objective: code length does not match dictionary size");
  }
  const Vector r = problem.sample() - problem.dictionary().atoms() * z;
  return 0.5 * r.squaredNorm() + problem.lambda() * z.lpNorm<1>();
}

double kkt_residual(const LassoProblem& problem, const Eigen::Ref<const Vector>& z) {
  if (z.size() != problem.dictionary().size()) {
    throw DimensionError("kkt_residual: code length does not match dictionary size");
  }
  const Vector a = z;
  return kkt_from_correlations(
      residual_correlations(problem.dictionary(), problem.sample(), a), a, problem.lambda());
}

SparseCode solve(const LassoProblem& problem, double tol, int max_iter) {
  LassoOptions options;
  options.tol = tol;
  options.max_iter = max_iter;
  return solve(problem, options);
}

SparseCode solve(const LassoProblem& problem, const LassoOptions& options) {
  if (!(options.tol > 0)) throw ArgumentError("solve: tol must be positive");
  if (options.max_iter < 1) throw ArgumentError("solve: max_iter must be at least 1");

  const Dictionary& dict = problem.dictionary();
  const Vector& x = problem.sample();
  const double lambda = problem.lambda();
  const Index m = dict.size();
  const Matrix& gram = dict.gram();

  std::vector<Index> order = options.order;
  if (order.empty()) {
    order.resize(static_cast<std::size_t>(m));
    std::iota(order.begin(), order.end(), Index{0});
  } else {
    std::vector<Index> sorted = order;
    std::sort(sorted.begin(), sorted.end());
    for (Index i = 0; i < m; ++i) {
      if (static_cast<Index>(sorted.size()) != m || sorted[static_cast<std::size_t>(i)] != i) {
        throw ArgumentError("solve: coordinate order must be a permutation of 0..m-1");
      }
    }
  }

  SparseCode code;
  Vector a = Vector::Zero(m);
  if (options.warm_start) {
    if (options.warm_start->size() != m) throw DimensionError("solve: warm start has wrong length");
    a = *options.warm_start;
  }

  auto finish = [&](int iterations, double kkt) {
    code.coefficients = a;
    code.support = support_of(a);
    code.kkt_residual = kkt;
    code.objective = objective(problem, a);
    code.iterations = iterations;
    return code;
  };

  if (x.isZero(0.0)) {
    a.setZero();
    return finish(0, 0.0);
  }

  const Vector c = dict.atoms().transpose() * x;
  Vector corr = c - gram * a;
  std::vector<signed char> pattern(static_cast<std::size_t>(m), 0);
  bool pattern_stable = false;

  Vector best = a;
  double best_kkt = kkt_from_correlations(residual_correlations(dict, x, a), a, lambda);
  if (best_kkt <= options.tol) return finish(0, best_kkt);

  Vector polished;
  for (int sweep = 1; sweep <= options.max_iter; ++sweep) {
    for (Index j : order) {
      const double old = a(j);
      const double diag = gram(j, j);
      const double updated = soft_threshold(corr(j) + diag * old, lambda) / diag;
      if (updated != old) {
        corr.noalias() -= gram.col(j) * (updated - old);
        a(j) = updated;
      }
    }

    if (pattern_stable && polish(gram, c, lambda, a, polished)) {
      const Vector polished_corr = residual_correlations(dict, x, polished);
      const double polished_kkt = kkt_from_correlations(polished_corr, polished, lambda);
      const double current_kkt = kkt_from_correlations(corr, a, lambda);
      if (polished_kkt < current_kkt) {
        a = polished;
        corr = polished_corr;
      }
    }
    pattern_stable = same_pattern(a, pattern);
    for (Index i = 0; i < m; ++i) pattern[static_cast<std::size_t>(i)] = static_cast<signed char>(sign_of(a(i)));

    if (kkt_from_correlations(corr, a, lambda) <= options.tol) {
      // Confirm against correlations recomputed from the residual; the
      // incrementally updated ones accumulate rounding error.
      corr = residual_correlations(dict, x, a);
      const double kkt = kkt_from_correlations(corr, a, lambda);
      if (kkt < best_kkt) {
        best_kkt = kkt;
        best = a;
      }
      if (kkt <= options.tol) return finish(sweep, kkt);
    }
    if (sweep % 64 == 0) {
      corr = residual_correlations(dict, x, a);
      const double kkt = kkt_from_correlations(corr, a, lambda);
      if (kkt < best_kkt) {
        best_kkt = kkt;
        best = a;
      }
    }
  }
  throw ConvergenceError("lasso solve: KKT residual " + std::to_string(best_kkt) +
                             " above tolerance after " + std::to_string(options.max_iter) +
                             " sweeps",
                         best, best_kkt);
}

double subgradient_identity_gap(const LassoProblem& problem, const SparseCode& code) {
  const Vector& a = code.coefficients;
  const Vector recon = problem.dictionary().atoms() * a;
  const double lhs = problem.lambda() * a.lpNorm<1>();
  const double rhs = (problem.sample() - recon).dot(recon);
  return std::abs(lhs - rhs);
}

double optimal_value(const LassoProblem& problem, const LassoOptions& options) {
  return solve(problem, options).objective;
}

}  // namespace ptl
