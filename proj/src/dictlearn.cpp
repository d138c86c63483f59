#include "ptl/dictlearn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ptl/stability.hpp"

namespace ptl {

SignedPermutation SignedPermutation::identity(Index m) {
  SignedPermutation p;
  p.source.resize(static_cast<std::size_t>(m));
  std::iota(p.source.begin(), p.source.end(), Index{0});
  p.signs.assign(static_cast<std::size_t>(m), 1.0);
  return p;
}

bool SignedPermutation::valid(Index m) const {
  if (static_cast<Index>(source.size()) != m || static_cast<Index>(signs.size()) != m) return false;
  std::vector<Index> sorted = source;
  std::sort(sorted.begin(), sorted.end());
  for (Index i = 0; i < m; ++i) {
    if (sorted[static_cast<std::size_t>(i)] != i) return false;
  }
  return std::all_of(signs.begin(), signs.end(), [](double s) { return s == 1.0 || s == -1.0; });
}

Matrix SignedPermutation::apply(const Matrix& est) const {
  Matrix out(est.rows(), est.cols());
  for (std::size_t j = 0; j < source.size(); ++j) {
    out.col(static_cast<Index>(j)) = signs[j] * est.col(source[j]);
  }
  return out;
}

AlignedError dict_error(const Dictionary& est, const Dictionary& truth) {
  if (est.dim() != truth.dim() || est.size() != truth.size()) {
    throw DimensionError("dict_error: estimate and truth have different shapes");
  }
  const Index m = est.size();
  const Matrix inner = est.atoms().transpose() * truth.atoms();  // (est i, truth j)

  SignedPermutation greedy;
  greedy.source.assign(static_cast<std::size_t>(m), -1);
  greedy.signs.assign(static_cast<std::size_t>(m), 1.0);
  std::vector<bool> est_used(static_cast<std::size_t>(m), false);
  for (Index round = 0; round < m; ++round) {
    double best = -1.0;
    Index bi = 0, bj = 0;
    for (Index j = 0; j < m; ++j) {
      if (greedy.source[static_cast<std::size_t>(j)] >= 0) continue;
      for (Index i = 0; i < m; ++i) {
        if (est_used[static_cast<std::size_t>(i)]) continue;
        if (std::abs(inner(i, j)) > best) {
          best = std::abs(inner(i, j));
          bi = i;
          bj = j;
        }
      }
    }
    est_used[static_cast<std::size_t>(bi)] = true;
    greedy.source[static_cast<std::size_t>(bj)] = bi;
    greedy.signs[static_cast<std::size_t>(bj)] = inner(bi, bj) < 0 ? -1.0 : 1.0;
  }

  SignedPermutation straight = SignedPermutation::identity(m);
  for (Index j = 0; j < m; ++j) {
    straight.signs[static_cast<std::size_t>(j)] = inner(j, j) < 0 ? -1.0 : 1.0;
  }

  const double e_greedy = induced_norm_1_2(greedy.apply(est.atoms()) - truth.atoms());
  const double e_straight = induced_norm_1_2(straight.apply(est.atoms()) - truth.atoms());
  if (e_straight < e_greedy) return {e_straight, straight};
  return {e_greedy, greedy};
}

DictEstimate oracle_estimator(const Dictionary& truth, double target_error, CounterRng& rng) {
  DictEstimate out(perturb_dictionary(truth, target_error, rng));
  out.alignment = SignedPermutation::identity(truth.size());
  out.error_to_truth = induced_norm_1_2(out.dictionary.atoms() - truth.atoms());
  return out;
}

namespace {

struct Codes {
  Matrix a;  // m x N
  double mean_objective = 0.0;
};

Codes code_all(const Dictionary& dict, const Matrix& samples, double lambda, const Matrix* warm,
               const LearnOptions& options) {
  Codes c;
  c.a.resize(dict.size(), samples.cols());
  double total = 0.0;
  for (Index n = 0; n < samples.cols(); ++n) {
    LassoOptions lo;
    lo.tol = options.tol;
    lo.max_iter = options.max_iter;
    if (warm) lo.warm_start = warm->col(n);
    const SparseCode code = solve(LassoProblem(dict, samples.col(n), lambda), lo);
    c.a.col(n) = code.coefficients;
    total += code.objective;
  }
  c.mean_objective = total / static_cast<double>(samples.cols());
  return c;
}

// Index drawn with probability proportional to weights; uniform if all zero.
Index weighted_draw(const Vector& weights, CounterRng& rng) {
  const double total = weights.sum();
  if (!(total > 0)) return static_cast<Index>(rng.below(static_cast<std::uint64_t>(weights.size())));
  double u = rng.uniform() * total;
  for (Index i = 0; i < weights.size(); ++i) {
    u -= weights(i);
    if (u < 0) return i;
  }
  return weights.size() - 1;
}

Vector random_unit(Index d, CounterRng& rng) {
  for (;;) {
    Vector g = Vector::NullaryExpr(d, [&] { return rng.normal(); });
    const double n = g.norm();
    if (n > 0) return g / n;
  }
}

}  // namespace

DictEstimate learn_alternating(const Matrix& samples, Index m, double lambda, int rounds,
                               CounterRng& rng, const LearnOptions& options) {
  if (rounds < 1) throw ArgumentError("learn_alternating: rounds must be at least 1");
  if (samples.cols() < 1 || samples.rows() < 1) {
    throw DimensionError("learn_alternating: no samples");
  }
  if (m < 1) throw ArgumentError("learn_alternating: m must be at least 1");
  if (!(lambda > 0)) throw ArgumentError("learn_alternating: lambda must be positive");
  const Index d = samples.rows();
  const Index n_samples = samples.cols();

  std::vector<std::string> events;
  Matrix cols(d, m);
  if (options.initial) {
    if (options.initial->dim() != d || options.initial->size() != m) {
      throw DimensionError("learn_alternating: initial dictionary has the wrong shape");
    }
    cols = options.initial->atoms();
  } else {
    std::vector<Index> order(static_cast<std::size_t>(n_samples));
    std::iota(order.begin(), order.end(), Index{0});
    for (Index i = n_samples - 1; i > 0; --i) {
      std::swap(order[static_cast<std::size_t>(i)],
                order[rng.below(static_cast<std::uint64_t>(i + 1))]);
    }
    for (Index j = 0; j < m; ++j) {
      const Vector s = samples.col(order[static_cast<std::size_t>(j % n_samples)]);
      const double norm = s.norm();
      if (j < n_samples && norm > 0) {
        cols.col(j) = s / norm;
      } else {
        cols.col(j) = random_unit(d, rng);
      }
    }
  }

  Dictionary dict(cols);
  Codes codes = code_all(dict, samples, lambda, nullptr, options);
  std::vector<double> trace{codes.mean_objective};

  for (int round = 1; round <= rounds; ++round) {
    Matrix atoms = dict.atoms();
    Matrix residual = samples - atoms * codes.a;
    for (Index j = 0; j < m; ++j) {
      const auto usage = codes.a.row(j);
      if (usage.isZero(0.0)) {
        const Vector weights = residual.colwise().squaredNorm().transpose();
        const Index pick = weighted_draw(weights, rng);
        const double norm = samples.col(pick).norm();
        atoms.col(j) = norm > 0 ? Vector(samples.col(pick) / norm) : random_unit(d, rng);
        events.push_back("round " + std::to_string(round) + ": column " + std::to_string(j) +
                         " unused, reinitialized from sample " + std::to_string(pick));
        continue;
      }
      // With the codes fixed, the best unit column is the normalized
      // correlation of the partial residual with this column's codes.
      residual.noalias() += atoms.col(j) * usage;
      const Vector v = residual * usage.transpose();
      const double vn = v.norm();
      if (vn > 0) atoms.col(j) = v / vn;
      residual.noalias() -= atoms.col(j) * usage;
    }
    dict = Dictionary(atoms);
    const Matrix previous = codes.a;
    codes = code_all(dict, samples, lambda, &previous, options);
    trace.push_back(codes.mean_objective);
  }

  DictEstimate out(dict);
  out.n_samples_used = static_cast<std::size_t>(n_samples);
  out.objective_trace = std::move(trace);
  out.events = std::move(events);
  if (options.truth) {
    AlignedError ae = dict_error(dict, *options.truth);
    out.error_to_truth = ae.error;
    out.alignment = std::move(ae.alignment);
  } else {
    out.alignment = SignedPermutation::identity(m);
  }
  return out;
}

}  // namespace ptl
