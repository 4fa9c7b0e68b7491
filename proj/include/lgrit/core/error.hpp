#pragma once

#include <stdexcept>
#include <string>

namespace lgrit {

/// Bad input, bad configuration, violated precondition. CLI exit code 1.
class ValidationError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Non-finite values, failed factorizations, missing artifacts at run time.
/// CLI exit code 2.
class RuntimeFailure : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class NumericalError : public RuntimeFailure {
  public:
    using RuntimeFailure::RuntimeFailure;
};

class IoError : public RuntimeFailure {
  public:
    using RuntimeFailure::RuntimeFailure;
};

}  // namespace lgrit
