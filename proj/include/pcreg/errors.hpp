#pragma once

#include <stdexcept>
#include <string>

namespace pcreg {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateQuaternion : public Error {
 public:
  using Error::Error;
};

/// Input arrays whose dimensions do not agree with the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A shape file or directory that could not be read.
class IngestError : public Error {
 public:
  using Error::Error;
};

class ManifestError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity appeared in features or losses.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

}  // namespace pcreg
