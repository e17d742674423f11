#pragma once

#include <stdexcept>
#include <string>

namespace gatedseg {

/// Base of every error the engine raises. `kind()` names the category for
/// one-line CLI reporting.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual const char* kind() const noexcept { return "error"; }
};

/// Malformed file structure (bad magic, unparsable header, unknown dtype).
class FormatError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "format error"; }
};

/// Payload inconsistent with its header (truncated, trailing bytes).
class CorruptionError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "corruption error"; }
};

/// Well-formed data that violates a domain invariant.
class ValidationError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "validation error"; }
};

class IoError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "io error"; }
};

class ConfigError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "config error"; }
};

/// Operation called with arguments outside its contract.
class ArgumentError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "argument error"; }
};

}  // namespace gatedseg
