#pragma once

#include <stdexcept>
#include <string>

namespace punctured {

// Vector/tensor sizes that do not fit together.
class DimensionError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

// Scalar parameter outside its admissible range (epsilon, bins, order d, ...).
class RangeError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

// Malformed binary container or config file.
class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Base for every failure of a numerical procedure.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// An iteration ran out of budget. Carries the last measured defect.
class ConvergenceError : public NumericalError {
public:
  ConvergenceError(const std::string& what, double last_residual)
      : NumericalError(what + " (last residual " + std::to_string(last_residual) + ")"),
        last_residual_(last_residual) {}

  double last_residual() const noexcept { return last_residual_; }

private:
  double last_residual_;
};

// Power iteration hit a zero contraction, so a factor cannot be normalized.
class DegeneratePointError : public NumericalError {
public:
  using NumericalError::NumericalError;
};

// sigma is (numerically) an eigenvalue, so the resolvent does not exist.
class SingularResolventError : public NumericalError {
public:
  SingularResolventError(const std::string& what, double gap)
      : NumericalError(what), gap_(gap) {}

  double gap() const noexcept { return gap_; }

private:
  double gap_;
};

// Stieltjes solve left its analytic branch (real point inside the support,
// vanishing denominator, loss of the half-plane property).
class BranchError : public NumericalError {
public:
  using NumericalError::NumericalError;
};

}  // namespace punctured
