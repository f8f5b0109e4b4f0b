#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace failcal {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad argument to a numerical routine (wrong dimension, non-positive scale, ...).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Malformed input data or configuration.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Numerical breakdown (factorization failure, non-finite likelihood, ...).
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Cholesky factorization failed for every rung of the jitter ladder.
class FactorizationError : public NumericalError {
public:
    FactorizationError(const std::string &what, std::vector<double> attempted)
        : NumericalError(what), attempted_(std::move(attempted)) {}

    /// Absolute jitter values tried, in order.
    const std::vector<double> &attempted() const noexcept { return attempted_; }

private:
    std::vector<double> attempted_;
};

/// File system or parse failure while reading/writing artifacts.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace failcal
