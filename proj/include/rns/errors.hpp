#pragma once

#include <stdexcept>
#include <string>

namespace rns {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration (grid mismatch, bad parameters, missing columns).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Input outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Argument outside the range of an invertible map.
class OutOfRangeError : public DomainError {
public:
    using DomainError::DomainError;
};

/// Non-finite values appeared during time integration.
class BlowUpError : public Error {
public:
    using Error::Error;
};

/// File-system or serialization failure.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace rns
