#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mte {

/// Base class for failures raised while estimating. `kind()` is a stable
/// machine-readable tag used by the CLI's structured error output.
class EstimationError : public std::runtime_error {
public:
  EstimationError(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

private:
  std::string kind_;
};

/// A conditional-density denominator vanished: the query covariate lies
/// outside the effective support of that arm.
class DegenerateLocalityError : public EstimationError {
public:
  DegenerateLocalityError(int arm, std::size_t observation, const std::string& what)
      : EstimationError("degenerate_locality", what), arm_(arm), observation_(observation) {}

  int arm() const noexcept { return arm_; }
  std::size_t observation() const noexcept { return observation_; }

private:
  int arm_;
  std::size_t observation_;
};

class ConstantCovariateError : public EstimationError {
public:
  ConstantCovariateError(std::size_t column, const std::string& what)
      : EstimationError("constant_covariate", what), column_(column) {}
  std::size_t column() const noexcept { return column_; }

private:
  std::size_t column_;
};

class EmptyArmError : public EstimationError {
public:
  explicit EmptyArmError(const std::string& what) : EstimationError("empty_arm", what) {}
};

class NoOverlapError : public EstimationError {
public:
  explicit NoOverlapError(const std::string& what) : EstimationError("no_overlap", what) {}
};

class ConvergenceError : public EstimationError {
public:
  ConvergenceError(int iterations, const std::string& what)
      : EstimationError("convergence", what), iterations_(iterations) {}
  int iterations() const noexcept { return iterations_; }

private:
  int iterations_;
};

class StratificationError : public EstimationError {
public:
  explicit StratificationError(const std::string& what) : EstimationError("stratification", what) {}
};

class InvalidCurveError : public EstimationError {
public:
  explicit InvalidCurveError(const std::string& what) : EstimationError("invalid_curve", what) {}
};

class ConfigurationError : public EstimationError {
public:
  explicit ConfigurationError(const std::string& what) : EstimationError("configuration", what) {}
};

class UnimodalityError : public EstimationError {
public:
  explicit UnimodalityError(const std::string& what) : EstimationError("unimodality_violation", what) {}
};

class HarnessError : public EstimationError {
public:
  explicit HarnessError(const std::string& what) : EstimationError("harness", what) {}
};

/// Broken internal invariant (e.g. an unclipped propensity reached a score).
class InvariantViolation : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

}  // namespace mte
