#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vopr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An input object violates one of its type invariants.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A realized class element (w*, beta*) cannot be represented because the
/// denominator distribution has no mass where the numerator does.
class UnrealizableError : public Error {
 public:
  using Error::Error;
};

/// Policy enumeration would exceed the configured size cap.
class EnumerationTooLarge : public Error {
 public:
  explicit EnumerationTooLarge(std::size_t cap)
      : Error("enumeration too large: more than " + std::to_string(cap) +
              " policies"),
        cap_(cap) {}

  std::size_t cap() const noexcept { return cap_; }

 private:
  std::size_t cap_;
};

/// The advantage premise of the advantage-to-suboptimality check fails.
class PremiseViolated : public Error {
 public:
  using Error::Error;
};

/// Experiment configuration is malformed or references missing files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace vopr
