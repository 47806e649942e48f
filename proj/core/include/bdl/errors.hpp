#pragma once

#include <stdexcept>
#include <string>

namespace bdl {

// Base of every error the library raises. The CLI maps the two families
// below onto exit codes: validation-like errors -> 2, numerics -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape disagreement between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Mathematical domain violation (e.g. log of a non-positive value).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Caller broke an API precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Malformed file content (bad magic, bad header).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Payload shorter or longer than its header announces.
class LengthError : public Error {
 public:
  using Error::Error;
};

// Two inputs that must agree do not (image/label counts).
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

class DegenerateDatasetError : public Error {
 public:
  using Error::Error;
};

class SizeError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf during training or a broken numerical routine.
class NumericsError : public Error {
 public:
  using Error::Error;
};

// Invalid experiment configuration, detected before any training.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

// A trained helper model missed its quality floor.
class CalibrationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace bdl
