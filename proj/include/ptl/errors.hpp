#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace ptl {

/// Shape or length mismatch between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A scalar argument outside its documented domain.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Exhaustive enumeration would exceed the configured budget.
class BudgetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A matrix that must be inverted is singular or numerically close to it.
class ConditioningError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A bound is requested outside the parameter regime in which it is defined.
class RegimeError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// An iterative solver ran out of iterations. Carries the best iterate seen
/// and its optimality residual so callers can decide whether to use it.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, Eigen::VectorXd best_iterate,
                   double residual)
      : std::runtime_error(what),
        best_iterate_(std::move(best_iterate)),
        residual_(residual) {}

  const Eigen::VectorXd& best_iterate() const noexcept { return best_iterate_; }
  double residual() const noexcept { return residual_; }

 private:
  Eigen::VectorXd best_iterate_;
  double residual_;
};

}  // namespace ptl
