#pragma once

#include <stdexcept>
#include <string>

namespace rangefuse {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or grid dimensions disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A 3D point at the sensor origin has no defined direction.
class DegeneratePointError : public Error {
 public:
  using Error::Error;
};

/// Camera, rig or pipeline configuration is unusable.
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

/// An operation parameter is outside its declared domain.
class ParameterError : public Error {
 public:
  using Error::Error;
};

class TrainingDivergedError : public Error {
 public:
  using Error::Error;
};

class InfeasibleAssignmentError : public Error {
 public:
  using Error::Error;
};

/// Input data violates a documented invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace rangefuse
