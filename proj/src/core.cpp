#include "ptl/core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

namespace ptl {

Dictionary::Dictionary(const Matrix& columns) {
  if (columns.rows() < 1 || columns.cols() < 1) {
    throw DimensionError("Dictionary: need d >= 1 and m >= 1");
  }
  auto data = std::make_shared<Data>();
  data->atoms = normalize_columns(columns);
  data->gram = data->atoms.transpose() * data->atoms;
  data_ = std::move(data);
}

Dictionary random_gaussian_dictionary(Index d, Index m, CounterRng& rng) {
  if (d < 1 || m < 1) throw DimensionError("random_gaussian_dictionary: empty shape");
  Matrix g(d, m);
  for (Index j = 0; j < m; ++j) {
    for (Index i = 0; i < d; ++i) g(i, j) = rng.normal();
  }
  return Dictionary(g);
}

Dictionary random_orthonormal_dictionary(Index d, Index m, CounterRng& rng) {
  if (m > d) throw DimensionError("random_orthonormal_dictionary: m > d");
  Matrix g(d, m);
  for (Index j = 0; j < m; ++j) {
    for (Index i = 0; i < d; ++i) g(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(d, m);
  return Dictionary(q);
}

Dictionary identity_hadamard_dictionary(Index d, Index m) {
  if (d < 1 || (d & (d - 1)) != 0) {
    throw ArgumentError("identity_hadamard_dictionary: d must be a power of two");
  }
  if (m < 1 || m > 2 * d) throw DimensionError("identity_hadamard_dictionary: need 1 <= m <= 2d");
  Matrix h = Matrix::Ones(1, 1);
  while (h.rows() < d) {
    const Index n = h.rows();
    Matrix next(2 * n, 2 * n);
    next << h, h, h, -h;
    h = std::move(next);
  }
  const Index spikes = std::min<Index>((m + 1) / 2, d);
  const Index waves = m - spikes;
  Matrix cols(d, m);
  cols.leftCols(spikes) = Matrix::Identity(d, spikes);
  cols.rightCols(waves) = h.leftCols(waves) / std::sqrt(static_cast<double>(d));
  return Dictionary(cols);
}

IncoherenceReport mu_incoherence(const Dictionary& dict, std::optional<Index> k) {
  IncoherenceReport report;
  const Index m = dict.size();
  if (m > 1) {
    Matrix off = dict.gram().cwiseAbs();
    off.diagonal().setZero();
    report.max_offdiag = off.maxCoeff();
  }
  report.mu = report.max_offdiag * std::sqrt(static_cast<double>(dict.dim()));
  if (k) report.restricted_eig_min = restricted_eigenvalue(dict, *k);
  return report;
}

std::uint64_t binomial(std::uint64_t n, std::uint64_t k) noexcept {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t result = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    // result * (n - k + i) / i stays integral at every step.
    const std::uint64_t factor = n - k + i;
    if (result > std::numeric_limits<std::uint64_t>::max() / factor) {
      return std::numeric_limits<std::uint64_t>::max();
    }
    result = result * factor / i;
  }
  return result;
}

double restricted_eigenvalue(const Dictionary& dict, Index k, std::uint64_t budget) {
  const Index m = dict.size();
  if (k < 1 || k > m) throw ArgumentError("restricted_eigenvalue: need 1 <= k <= m");
  const std::uint64_t count = binomial(static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(k));
  if (count > budget) {
    throw BudgetError("restricted_eigenvalue: " + std::to_string(count) +
                      " supports exceed budget " + std::to_string(budget));
  }

  const Matrix& gram = dict.gram();
  std::vector<Index> idx(static_cast<std::size_t>(k));
  for (Index i = 0; i < k; ++i) idx[static_cast<std::size_t>(i)] = i;
  Matrix sub(k, k);
  Eigen::SelfAdjointEigenSolver<Matrix> solver;
  double best = std::numeric_limits<double>::infinity();
  for (;;) {
    for (Index a = 0; a < k; ++a) {
      for (Index b = 0; b < k; ++b) sub(a, b) = gram(idx[a], idx[b]);
    }
    solver.compute(sub, Eigen::EigenvaluesOnly);
    best = std::min(best, solver.eigenvalues()(0));

    // Advance to the next combination in lexicographic order.
    Index pos = k - 1;
    while (pos >= 0 && idx[pos] == m - k + pos) --pos;
    if (pos < 0) break;
    ++idx[pos];
    for (Index p = pos + 1; p < k; ++p) idx[p] = idx[p - 1] + 1;
  }
  return std::clamp(best, 0.0, 1.0);
}

double irrepresentation_margin(const Dictionary& dict, std::span<const Index> support,
                               std::span<const double> signs) {
  const Index m = dict.size();
  const auto k = static_cast<Index>(support.size());
  if (k < 1) throw ArgumentError("irrepresentation_margin: empty support");
  if (signs.size() != support.size()) {
    throw DimensionError("irrepresentation_margin: signs and support differ in length");
  }
  std::vector<bool> on_support(static_cast<std::size_t>(m), false);
  for (Index i : support) {
    if (i < 0 || i >= m) throw ArgumentError("irrepresentation_margin: index out of range");
    if (on_support[static_cast<std::size_t>(i)]) {
      throw ArgumentError("irrepresentation_margin: repeated support index");
    }
    on_support[static_cast<std::size_t>(i)] = true;
  }
  std::vector<Index> off;
  for (Index i = 0; i < m; ++i) {
    if (!on_support[static_cast<std::size_t>(i)]) off.push_back(i);
  }
  if (off.empty()) return 1.0;

  // The 1/d normalization of C_ij cancels in C21 C11^{-1}.
  const Matrix& gram = dict.gram();
  Matrix c11(k, k);
  Vector s(k);
  for (Index a = 0; a < k; ++a) {
    s(a) = signs[static_cast<std::size_t>(a)];
    for (Index b = 0; b < k; ++b) c11(a, b) = gram(support[a], support[b]);
  }
  Eigen::LDLT<Matrix> ldlt(c11);
  const double min_pivot = ldlt.vectorD().minCoeff();
  if (ldlt.info() != Eigen::Success || !(min_pivot > 1e-12)) {
    throw ConditioningError("irrepresentation_margin: support Gram block is singular");
  }
  const Vector z = ldlt.solve(s);

  double margin = std::numeric_limits<double>::infinity();
  for (Index j : off) {
    double v = 0.0;
    for (Index a = 0; a < k; ++a) v += gram(j, support[a]) * z(a);
    margin = std::min(margin, 1.0 - std::abs(v));
  }
  return margin;
}

void write_matrix(std::ostream& os, const Matrix& m) {
  os << m.rows() << ' ' << m.cols() << '\n';
  std::ostringstream line;
  line << std::setprecision(17);
  for (Index i = 0; i < m.rows(); ++i) {
    line.str("");
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) line << ' ';
      line << m(i, j);
    }
    os << line.str() << '\n';
  }
}

Matrix read_matrix(std::istream& is) {
  std::string header;
  if (!std::getline(is, header)) throw ArgumentError("read_matrix: missing header line");
  std::istringstream hs(header);
  long long rows = -1, cols = -1;
  if (!(hs >> rows >> cols) || rows < 0 || cols < 0) {
    throw ArgumentError("read_matrix: line 1: expected \"rows cols\"");
  }
  Matrix m(rows, cols);
  std::string line;
  for (long long i = 0; i < rows; ++i) {
    if (!std::getline(is, line)) {
      throw ArgumentError("read_matrix: line " + std::to_string(i + 2) + ": missing row");
    }
    std::istringstream ls(line);
    for (long long j = 0; j < cols; ++j) {
      if (!(ls >> m(i, j))) {
        throw ArgumentError("read_matrix: line " + std::to_string(i + 2) + ": expected " +
                            std::to_string(cols) + " values");
      }
    }
    std::string extra;
    if (ls >> extra) {
      throw ArgumentError("read_matrix: line " + std::to_string(i + 2) + ": trailing data");
    }
  }
  return m;
}

void save_dictionary(const std::string& path, const Dictionary& dict) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_matrix(out, dict.atoms());
}

Matrix load_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_matrix(in);
}

Dictionary load_dictionary(const std::string& path) { return Dictionary(load_matrix(path)); }

}  // namespace ptl
