#pragma once

#include <stdexcept>
#include <string>

namespace carnot {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inconsistent shapes: bracket tables, coordinate lengths, bases.
class StructuralError : public Error {
 public:
  using Error::Error;
};

// Group law requested for step > 3.
class UnsupportedStepError : public Error {
 public:
  using Error::Error;
};

// Argument outside the domain of an operation (lambda <= 0, empty set, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

class CalibrationError : public Error {
 public:
  using Error::Error;
};

class SplittingError : public Error {
 public:
  using Error::Error;
};

class SamplingError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Two graph points share a base point; the cone opening or c_split is wrong.
class InjectivityError : public Error {
 public:
  using Error::Error;
};

class EmptyTranslationError : public Error {
 public:
  using Error::Error;
};

class ResolutionError : public Error {
 public:
  using Error::Error;
};

// LP solver could not certify its optimum within tolerance.
class ToleranceError : public Error {
 public:
  ToleranceError(const std::string& what, double lower, double upper)
      : Error(what), lower_(lower), upper_(upper) {}
  double lower() const { return lower_; }
  double upper() const { return upper_; }

 private:
  double lower_;
  double upper_;
};

class AlgorithmInvariantError : public Error {
 public:
  using Error::Error;
};

class NetDensityError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace carnot
