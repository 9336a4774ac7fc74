#pragma once

#include <stdexcept>
#include <string>

namespace chainctl {

/// Bad input: wrong sizes, non-finite values, out-of-range parameters.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical computation failed (overflow, non-convergence, ...).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite interaction force; `gap_index` is k for the gap q_k - q_{k+1}
/// (1-based).
class OverflowError : public NumericalError {
 public:
  OverflowError(const std::string& what, int gap_index, double gap)
      : NumericalError(what), gap_index_(gap_index), gap_(gap) {}
  int gap_index() const { return gap_index_; }
  double gap() const { return gap_; }

 private:
  int gap_index_;
  double gap_;
};

/// An iterative method did not converge.
class ConvergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace chainctl
