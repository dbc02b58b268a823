#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

namespace lsem {

/// Coarse classification used by the CLI to pick an exit code.
enum class ErrorClass {
  validation,  // malformed input, violated structural or configuration contract
  numerical,   // solver / factorization / convergence failure
};

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, const std::string& what) : std::runtime_error(what), class_(cls) {}
  [[nodiscard]] ErrorClass error_class() const noexcept { return class_; }

 private:
  ErrorClass class_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(ErrorClass::validation, what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ErrorClass::numerical, what) {}
};

// Validation family.
class StructuralError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};
class AcyclicityError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};
class PatternError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};
class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};
class SampleSizeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};
class SpecError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};
class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};
class OrderingError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};
class IngestionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};
class CapacityError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};
class UndefinedDistanceError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};
class PremiseError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Numerical family.
class DefinitenessError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class NearSingularError : public NumericalError {
 public:
  NearSingularError(std::size_t vertex, const std::string& what)
      : NumericalError(what), vertex_(vertex) {}
  /// 0-based vertex whose linear system was rank deficient.
  [[nodiscard]] std::size_t vertex() const noexcept { return vertex_; }

 private:
  std::size_t vertex_;
};

class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& what, Eigen::MatrixXd last_iterate = {})
      : NumericalError(what), last_(std::move(last_iterate)) {}
  [[nodiscard]] const Eigen::MatrixXd& last_iterate() const noexcept { return last_; }

 private:
  Eigen::MatrixXd last_;
};

}  // namespace lsem
