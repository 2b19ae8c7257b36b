#pragma once

#include <stdexcept>
#include <string>

namespace irisnet {

/// Base of every error raised by the library. CLI front-ends map the
/// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible (matmul, broadcasting, layer widths).
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A layer or component was configured with arguments that cannot work.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A caller violated an API precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// An object was used in the wrong lifecycle state.
class StateError : public Error {
 public:
  using Error::Error;
};

/// A non-finite value appeared in a tensor.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Batch statistics are undefined (a single element per channel).
class DegenerateBatchError : public Error {
 public:
  using Error::Error;
};

/// Bad user-supplied data: empty datasets, labels out of range.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Training diverged or otherwise failed at run time.
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// The model lacks a capability the call needs (e.g. no signature layer).
class CapabilityError : public Error {
 public:
  using Error::Error;
};

/// A signature has zero norm and cannot be normalized.
class DegenerateSignatureError : public Error {
 public:
  using Error::Error;
};

/// Gallery/probe bookkeeping is inconsistent.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// A file is malformed or truncated.
class FormatError : public Error {
 public:
  using Error::Error;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// A checkpoint tensor does not fit the model it is loaded into.
class ShapeMismatchError : public Error {
 public:
  using Error::Error;
};

}  // namespace irisnet
