#pragma once

#include <stdexcept>
#include <string>

namespace qdcav {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad input: invalid parameters, malformed files, unknown config keys.
/// The CLI maps these to exit code 2.
class InputError : public Error {
public:
    using Error::Error;
};

class ParameterError : public InputError {
public:
    using InputError::InputError;
};

class ResolutionError : public InputError {
public:
    using InputError::InputError;
};

class IoError : public InputError {
public:
    using InputError::InputError;
};

/// Numeric or model failure. The CLI maps these to exit code 1.
class NumericError : public Error {
public:
    using Error::Error;
};

class InstabilityError : public NumericError {
public:
    InstabilityError(const std::string& what, long step)
        : NumericError(what), step_(step) {}
    long step() const noexcept { return step_; }

private:
    long step_;
};

class NoResonanceError : public NumericError {
public:
    using NumericError::NumericError;
};

class MultimodeError : public NumericError {
public:
    using NumericError::NumericError;
};

class FluxSignError : public NumericError {
public:
    using NumericError::NumericError;
};

class DegenerateFitError : public NumericError {
public:
    using NumericError::NumericError;
};

class UnidentifiableError : public NumericError {
public:
    using NumericError::NumericError;
};

class InternalError : public NumericError {
public:
    using NumericError::NumericError;
};

}  // namespace qdcav
