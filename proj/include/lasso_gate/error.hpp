#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lasso_gate {

// Base for every error raised by the library. The CLI maps these onto
// process exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad user input: malformed files, violated preconditions, bad options.
class InputError : public Error {
public:
    using Error::Error;
};

class ParseError : public InputError {
public:
    using InputError::InputError;
};

class ConstantColumnError : public InputError {
public:
    ConstantColumnError(std::size_t column, const std::string& name)
        : InputError("marker column " + std::to_string(column) +
                     (name.empty() ? std::string() : " ('" + name + "')") +
                     " has zero standard deviation"),
          column_(column) {}

    std::size_t column() const noexcept { return column_; }

private:
    std::size_t column_;
};

class DegenerateResponseError : public InputError {
public:
    DegenerateResponseError() : InputError("response y has zero standard deviation") {}
};

class NotSymmetricError : public InputError {
public:
    using InputError::InputError;
};

class UnderdeterminedError : public InputError {
public:
    UnderdeterminedError()
        : InputError("lambda = 0 has no unique solution when p >= n") {}
};

class InsufficientReplicatesError : public InputError {
public:
    using InputError::InputError;
};

class DegenerateFitError : public Error {
public:
    explicit DegenerateFitError(std::size_t column)
        : Error("marginal regression on marker " + std::to_string(column) +
                " has zero residual variance"),
          column_(column) {}

    std::size_t column() const noexcept { return column_; }

private:
    std::size_t column_;
};

class NoConvergenceError : public Error {
public:
    using Error::Error;
};

class FingerprintMismatchError : public Error {
public:
    using Error::Error;
};

// A calibration table whose validation batch fell outside the size band.
class ValidationFailedError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace lasso_gate
