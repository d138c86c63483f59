#pragma once

// Brute-force reference computations used only by tests. None of these call
// into the library's solvers; they rebuild every quantity from raw matrices.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline void for_each_subset(Index m, Index k, const std::function<void(const std::vector<Index>&)>& fn) {
  std::vector<Index> idx;
  std::function<void(Index)> rec = [&](Index start) {
    if (static_cast<Index>(idx.size()) == k) {
      fn(idx);
      return;
    }
    for (Index i = start; i < m; ++i) {
      idx.push_back(i);
      rec(i + 1);
      idx.pop_back();
    }
  };
  rec(0);
}

inline double lasso_objective(const Matrix& D, const Vector& x, double lambda, const Vector& z) {
  return 0.5 * (x - D * z).squaredNorm() + lambda * z.cwiseAbs().sum();
}

/// Enumerates all 3^m sign patterns. For each pattern s, the objective
/// restricted to the orthant {sign(z) = s} is a quadratic whose stationary
/// point solves D_S^T D_S z_S = D_S^T x - lambda s_S. Patterns whose
/// stationary point has the assumed signs are candidates; the minimizer is the
/// candidate with the smallest objective.
inline Vector lasso_sign_enumeration(const Matrix& D, const Vector& x, double lambda) {
  const Index m = D.cols();
  Vector best = Vector::Zero(m);
  double best_val = lasso_objective(D, x, lambda, best);
  std::vector<int> s(static_cast<std::size_t>(m), -1);
  const auto total = static_cast<long>(std::pow(3, m));
  for (long code = 0; code < total; ++code) {
    long c = code;
    std::vector<Index> supp;
    for (Index i = 0; i < m; ++i) {
      s[i] = static_cast<int>(c % 3) - 1;
      c /= 3;
      if (s[i] != 0) supp.push_back(i);
    }
    if (supp.empty()) continue;
    const auto k = static_cast<Index>(supp.size());
    Matrix Ds(D.rows(), k);
    Vector ss(k);
    for (Index p = 0; p < k; ++p) {
      Ds.col(p) = D.col(supp[p]);
      ss(p) = s[supp[p]];
    }
    Matrix g = Ds.transpose() * Ds;
    Eigen::FullPivLU<Matrix> lu(g);
    if (lu.rank() < k) continue;
    Vector zs = lu.solve(Ds.transpose() * x - lambda * ss);
    bool ok = true;
    for (Index p = 0; p < k; ++p) ok = ok && (zs(p) * ss(p) > 0);
    if (!ok) continue;
    Vector z = Vector::Zero(m);
    for (Index p = 0; p < k; ++p) z(supp[p]) = zs(p);
    const double val = lasso_objective(D, x, lambda, z);
    if (val < best_val) {
      best_val = val;
      best = z;
    }
  }
  return best;
}

/// max over |I| = m-k of min_{j in I} (lambda - corr_j), by enumeration.
inline double margin_by_subsets(const Vector& abs_corr, Index k, double lambda) {
  const Index m = abs_corr.size();
  double best = -std::numeric_limits<double>::infinity();
  for_each_subset(m, m - k, [&](const std::vector<Index>& I) {
    double worst = std::numeric_limits<double>::infinity();
    for (Index j : I) worst = std::min(worst, lambda - abs_corr(j));
    best = std::max(best, worst);
  });
  return best;
}

inline double max_offdiag_pairs(const Matrix& D) {
  double best = 0.0;
  for (Index i = 0; i < D.cols(); ++i) {
    for (Index j = i + 1; j < D.cols(); ++j) {
      best = std::max(best, std::abs(D.col(i).dot(D.col(j))));
    }
  }
  return best;
}

/// Smallest squared singular value of D restricted to any k columns.
inline double restricted_min_sv2(const Matrix& D, Index k) {
  double best = std::numeric_limits<double>::infinity();
  for_each_subset(D.cols(), k, [&](const std::vector<Index>& S) {
    Matrix sub(D.rows(), k);
    for (Index p = 0; p < k; ++p) sub.col(p) = D.col(S[p]);
    Eigen::JacobiSVD<Matrix> svd(sub);
    const Vector sv = svd.singularValues();
    // With k > rows the Gram has k - rows zero eigenvalues.
    const double smallest = (k > D.rows()) ? 0.0 : sv(sv.size() - 1);
    best = std::min(best, smallest * smallest);
  });
  return best;
}

inline double irrepresentation_direct(const Matrix& D, const std::vector<Index>& S,
                                      const Vector& signs) {
  const auto k = static_cast<Index>(S.size());
  Matrix D1(D.rows(), k);
  for (Index p = 0; p < k; ++p) D1.col(p) = D.col(S[p]);
  const double d = static_cast<double>(D.rows());
  Matrix C11 = D1.transpose() * D1 / d;
  Matrix C11inv = C11.fullPivLu().inverse();
  double best = std::numeric_limits<double>::infinity();
  for (Index j = 0; j < D.cols(); ++j) {
    if (std::find(S.begin(), S.end(), j) != S.end()) continue;
    Eigen::RowVectorXd c21 = D.col(j).transpose() * D1 / d;
    best = std::min(best, 1.0 - std::abs((c21 * C11inv * signs)(0)));
  }
  return best;
}

}  // namespace oracle
