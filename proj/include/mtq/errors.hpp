#pragma once

#include <stdexcept>
#include <string>

namespace mtq {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid or inconsistent configuration (bad flags, missing files, mode/label mismatch).
class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Signal too short for the requested analysis.
class InputTooShortError : public Error {
 public:
  using Error::Error;
};

// Reference signal or distribution that makes a statistic undefined.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace mtq
