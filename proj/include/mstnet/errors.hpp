#pragma once

#include <stdexcept>
#include <string>

namespace mstnet {

// Base of every error thrown by the library. The CLI maps subclasses onto
// process exit codes (usage 1, data 2, numeric 3).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class TapeError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  enum class Kind {
    kMissingFile,
    kDimMismatch,
    kUnknownLabel,
    kVersionMismatch,
    kFormat,
    kSchema,
    kChecksum,
    kTooFewSamples,
  };

  DataError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace mstnet
