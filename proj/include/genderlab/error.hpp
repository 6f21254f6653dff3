#pragma once

#include <stdexcept>
#include <string>

namespace genderlab {

// Exception hierarchy. The CLI maps each family onto an exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or infeasible request (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or out-of-range data (exit code 3).
class InputError : public Error {
 public:
  using Error::Error;
};

// Stimulus or test-suite construction failures are data errors too.
class StimulusError : public InputError {
 public:
  using InputError::InputError;
};

class IoError : public InputError {
 public:
  using InputError::InputError;
};

// Non-finite loss during optimisation (exit code 4).
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// Violated internal contract (shape mismatch and similar).
class InternalError : public Error {
 public:
  using Error::Error;
};

}  // namespace genderlab
