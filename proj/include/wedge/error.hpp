#pragma once

#include <stdexcept>
#include <string>

namespace wedge {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed corpus content: bad manifest, polygon, tag, or missing file.
/// `locus` names the file or record at fault.
class ValidationError : public Error {
 public:
  ValidationError(std::string locus, const std::string& what)
      : Error(locus + ": " + what), locus_(std::move(locus)) {}
  const std::string& locus() const noexcept { return locus_; }

 private:
  std::string locus_;
};

class GeometryError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class FingerprintMismatch : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

}  // namespace wedge
