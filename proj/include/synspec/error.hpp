#pragma once

#include <stdexcept>
#include <string>

namespace synspec {

// Base of everything the library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad scalar argument (non-positive width, negative shift, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Value outside the range an operation is defined on.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Generation recipe cannot be satisfied.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed document. `path` names the offending field ("fingerprints[3].positions").
class ParseError : public Error {
 public:
  ParseError(std::string path, const std::string& what)
      : Error(path.empty() ? what : path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

// Binary file does not match the expected layout (NPY, checkpoint).
class FormatError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// API misuse, e.g. backward() without a matching forward().
class UsageError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace synspec
