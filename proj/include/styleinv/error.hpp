#pragma once

#include <stdexcept>
#include <string>

namespace styleinv {

// Base for every error the library raises. Subclasses map onto CLI exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf during training or inference.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed files: PGM headers, manifests, checkpoints, configs.
class FormatError : public Error {
 public:
  using Error::Error;
};

class CheckpointKindError : public Error {
 public:
  using Error::Error;
};

// A required artifact (style library, checkpoint, data dir) is absent.
class MissingArtifactError : public Error {
 public:
  using Error::Error;
};

}  // namespace styleinv
