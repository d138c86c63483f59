#pragma once

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ptl/errors.hpp"
#include "ptl/rng.hpp"

namespace ptl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Induced (1,2) norm: the largest Euclidean column norm of `e`.
template <typename Derived>
typename Derived::RealScalar induced_norm_1_2(const Eigen::MatrixBase<Derived>& e) {
  if (e.rows() == 0 || e.cols() == 0) {
    throw DimensionError("induced_norm_1_2: matrix has no columns");
  }
  return e.colwise().norm().maxCoeff();
}

/// Returns a copy of `m` with unit Euclidean columns. Throws ArgumentError on
/// a zero or non-finite column.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>
normalize_columns(const Eigen::MatrixBase<Derived>& m) {
  using Result = Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Result out = m;
  for (Index j = 0; j < out.cols(); ++j) {
    const auto norm = out.col(j).norm();
    if (!(norm > 0) || !std::isfinite(norm)) {
      throw ArgumentError("normalize_columns: column " + std::to_string(j) +
                          " is zero or not finite");
    }
    out.col(j) /= norm;
  }
  return out;
}

/// A d x m matrix with unit-norm columns (atoms). Immutable; the Gram matrix
/// is computed once at construction and shared between copies.
class Dictionary {
 public:
  static constexpr double kUnitTolerance = 1e-10;

  /// Renormalizes every column. Rejects empty shapes and zero columns.
  explicit Dictionary(const Matrix& columns);

  const Matrix& atoms() const noexcept { return data_->atoms; }
  const Matrix& gram() const noexcept { return data_->gram; }
  Index dim() const noexcept { return data_->atoms.rows(); }
  Index size() const noexcept { return data_->atoms.cols(); }
  auto atom(Index j) const { return data_->atoms.col(j); }

 private:
  struct Data {
    Matrix atoms;
    Matrix gram;
  };
  std::shared_ptr<const Data> data_;
};

Dictionary random_gaussian_dictionary(Index d, Index m, CounterRng& rng);

/// Orthonormal columns from the QR factor of a Gaussian matrix; needs m <= d.
Dictionary random_orthonormal_dictionary(Index d, Index m, CounterRng& rng);

/// First ceil(m/2) columns of the identity followed by floor(m/2) columns of
/// the normalized Sylvester-Hadamard matrix. d must be a power of two and
/// m <= 2d. Mixing both halves gives mu = 1 exactly.
Dictionary identity_hadamard_dictionary(Index d, Index m);

struct IncoherenceReport {
  double mu = 0.0;           // max_offdiag * sqrt(d)
  double max_offdiag = 0.0;  // max |<d_i, d_j>| over i != j
  std::optional<double> restricted_eig_min;
};

IncoherenceReport mu_incoherence(const Dictionary& dict,
                                 std::optional<Index> k = std::nullopt);

inline constexpr std::uint64_t kDefaultSupportBudget = 100000;

/// Minimum over all size-k supports of the smallest eigenvalue of the
/// support-restricted Gram. Exhaustive; throws BudgetError when C(m, k)
/// exceeds `budget`.
double restricted_eigenvalue(const Dictionary& dict, Index k,
                             std::uint64_t budget = kDefaultSupportBudget);

/// min over off-support rows of 1 - |C21 C11^{-1} s|. Positive means the
/// strong irrepresentation condition holds for this support and sign pattern.
/// Returns 1 when the support covers every atom.
double irrepresentation_margin(const Dictionary& dict, std::span<const Index> support,
                               std::span<const double> signs);

/// Binomial coefficient, saturating at UINT64_MAX.
std::uint64_t binomial(std::uint64_t n, std::uint64_t k) noexcept;

// Text matrix format: a "rows cols" line, then one line per row with
// space-separated values at 17 significant digits.
void write_matrix(std::ostream& os, const Matrix& m);
Matrix read_matrix(std::istream& is);

void save_dictionary(const std::string& path, const Dictionary& dict);
Dictionary load_dictionary(const std::string& path);
Matrix load_matrix(const std::string& path);

}  // namespace ptl
