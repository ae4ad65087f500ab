#pragma once

#include <stdexcept>
#include <string>

namespace laneseg {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Array or tensor dimensions do not match what an operation requires.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Values outside the admissible range (probabilities, masks, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Invalid model or training configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed augmentation spec (unknown kind, bad probability or range).
class SpecError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Video could not be opened or decoded.
class IngestError : public IoError {
 public:
  using IoError::IoError;
};

/// Video opened but yielded no frames.
class EmptyVideoError : public IngestError {
 public:
  using IngestError::IngestError;
};

/// Manifest, report or mask file could not be loaded.
class LoadError : public IoError {
 public:
  using IoError::IoError;
};

class CorruptCheckpointError : public LoadError {
 public:
  using LoadError::LoadError;
};

class ConfigMismatchError : public LoadError {
 public:
  using LoadError::LoadError;
};

/// Training produced a NaN or infinite loss.
class NonFiniteLossError : public Error {
 public:
  using Error::Error;
};

}  // namespace laneseg
