#pragma once

#include <stdexcept>
#include <string>

namespace sit {

// Error taxonomy shared by every module. The CLI maps these onto exit codes:
// ConfigError/BoundsError -> 2, DataError/ParseError/IoError/ShapeError -> 3,
// NumericError -> 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BoundsError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t byte_offset)
      : DataError(what + " (at byte " + std::to_string(byte_offset) + ")"),
        offset_(byte_offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

}  // namespace sit
