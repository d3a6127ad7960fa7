#pragma once

#include <stdexcept>
#include <string>

namespace megloc {

// Argument or precondition violation.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Numerical failure: non-finite values, rank deficiency, solver failure.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Sensor and source positions coincide, so the dipole field is undefined.
class SingularityError : public NumericError {
 public:
  using NumericError::NumericError;
};

// Unrecognized magic bytes or unsupported format version.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File is truncated or internally inconsistent.
class CorruptFileError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Files built from different lead fields were combined.
class CompatibilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace megloc
