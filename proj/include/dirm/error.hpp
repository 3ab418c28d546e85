#pragma once

#include <stdexcept>
#include <string>

namespace dirm {

// Exceptions thrown by the core. The C API maps each kind to a status code.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad argument to a sampler or evaluator (nonpositive variance, shape, ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Malformed configuration: constants, sampler settings, config files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Dataset fails the posterior-propriety gate.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Non-finite or degenerate intermediate inside the sampler.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace dirm
