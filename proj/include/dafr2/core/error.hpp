#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dafr2 {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument is outside its documented domain.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes disagree with what an operation expects.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A file does not follow its binary layout. Carries the offending byte offset.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Two inputs that must agree (e.g. image and label counts) do not.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

/// The requested feature exists in the taxonomy but has no implementation.
class NotImplementedError : public Error {
 public:
  using Error::Error;
};

/// Configuration text could not be parsed or resolved.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A numerical estimator produced non-finite values.
class InstabilityError : public Error {
 public:
  using Error::Error;
};

}  // namespace dafr2
