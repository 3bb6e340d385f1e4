#ifndef LBILL_ERRORS_HPP
#define LBILL_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace lbill {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure: root finders, optimizers, solvers.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Caller supplied something outside an operation's domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

// classical
class TangentialLaunch : public DomainError {
 public:
  using DomainError::DomainError;
};
class NoIntersection : public NumericalError {
 public:
  using NumericalError::NumericalError;
};
class NotConverged : public NumericalError {
 public:
  using NumericalError::NumericalError;
};
class SeedInRegularRegion : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// quantum
class MissingLevels : public NumericalError {
 public:
  using NumericalError::NumericalError;
};
class IllConditioned : public NumericalError {
 public:
  using NumericalError::NumericalError;
};
class PointOutsideDomain : public DomainError {
 public:
  using DomainError::DomainError;
};

// husimi
class DimensionMismatch : public DomainError {
 public:
  using DomainError::DomainError;
};

// spectra
class ParameterOutOfRange : public DomainError {
 public:
  using DomainError::DomainError;
};
class InsufficientData : public DomainError {
 public:
  using DomainError::DomainError;
};
class SampleOutOfRange : public DomainError {
 public:
  using DomainError::DomainError;
};
class IncompleteWindow : public DomainError {
 public:
  using DomainError::DomainError;
};
class DegenerateFit : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Optimizer gave up; carries the best point seen and the gradient norm there.
class OptimizerNotConverged : public NumericalError {
 public:
  OptimizerNotConverged(const std::string& what, double best_objective, double gradient_norm)
      : NumericalError(what), best_objective_(best_objective), gradient_norm_(gradient_norm) {}
  double best_objective() const noexcept { return best_objective_; }
  double gradient_norm() const noexcept { return gradient_norm_; }

 private:
  double best_objective_;
  double gradient_norm_;
};

// pipeline
class ConfigError : public Error {
 public:
  using Error::Error;
};
class MissingArtifact : public Error {
 public:
  using Error::Error;
};
class StageFailed : public Error {
 public:
  StageFailed(const std::string& stage, const std::string& what, bool numerical)
      : Error("stage '" + stage + "': " + what), stage_(stage), numerical_(numerical) {}
  const std::string& stage() const noexcept { return stage_; }
  bool numerical() const noexcept { return numerical_; }

 private:
  std::string stage_;
  bool numerical_;
};

}  // namespace lbill

#endif  // LBILL_ERRORS_HPP
