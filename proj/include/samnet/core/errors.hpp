#pragma once

#include <stdexcept>
#include <string>

namespace samnet {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents disagree with what an operation requires.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN or infinity where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

class VocabularyError : public Error {
 public:
  using Error::Error;
};

/// The episode generator could not satisfy its configuration.
class GenerationError : public Error {
 public:
  using Error::Error;
};

/// A transfer split or configuration violates its defining constraints.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint manifest does not match the model being loaded.
class VersionError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents (checkpoints, corpora, config files).
class FormatError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

}  // namespace samnet
