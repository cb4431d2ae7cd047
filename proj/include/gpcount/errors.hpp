#pragma once

#include <stdexcept>
#include <string>

namespace gpc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or extents that do not fit an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Input outside the mathematical domain of an operation (e.g. log of 0).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A latent vector with zero norm where the cosine kernel needs a direction.
class DegenerateLatentError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// Factorization failures and other floating-point breakdowns.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A caller broke a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Point annotation outside its image.
class AnnotationError : public Error {
 public:
  using Error::Error;
};

/// Synthetic data that cannot be produced with the requested settings.
class GenerationError : public Error {
 public:
  using Error::Error;
};

/// Optimization produced a non-finite loss.
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Malformed on-disk data. The message names the file and line.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration keys, values or flag combinations.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace gpc
