#pragma once

#include <stdexcept>
#include <string>

namespace qas {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation (negative t, NaN, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Argument outside a sampled or configured range.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Dimension or length mismatch.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A size cap was exceeded.
class SizeError : public Error {
 public:
  using Error::Error;
};

/// A derived object (metric, partition, ...) failed validation.
class ConstructionError : public Error {
 public:
  using Error::Error;
};

/// Iterative solver did not reach its tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Matrix is not symmetric positive definite.
class SpectralError : public Error {
 public:
  SpectralError(const std::string& what, double eigenvalue)
      : Error(what + " (eigenvalue " + std::to_string(eigenvalue) + ")"), eigenvalue_(eigenvalue) {}
  double eigenvalue() const noexcept { return eigenvalue_; }

 private:
  double eigenvalue_;
};

/// Parse failure in one of the text ingestion formats.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Measure support escapes the part on which a local barycenter is defined.
class PartError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure; message carries the path.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A supplied sub-graph cover violates the isometric-piece condition.
class CoverError : public Error {
 public:
  using Error::Error;
};

/// No operator in a finite family reaches the requested accuracy.
class SaturationError : public Error {
 public:
  using Error::Error;
};

/// An integrator left the region where the solution is trusted.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace qas
