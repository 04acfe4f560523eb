#pragma once

#include <stdexcept>
#include <string>

namespace rumpl {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

class CalibrationError : public Error {
 public:
  using Error::Error;
};

class BehindCamera : public Error {
 public:
  using Error::Error;
};

class DegenerateGeometry : public Error {
 public:
  using Error::Error;
};

class InsufficientViews : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed dataset or checkpoint content. `record()` is the zero-based
/// index of the offending record, or -1 when not record-oriented.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, long record = -1) : Error(what), record_(record) {}
  long record() const { return record_; }

 private:
  long record_;
};

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

}  // namespace rumpl
