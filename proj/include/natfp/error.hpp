#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace natfp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input. `location()` is a byte offset for binary input and a
/// 1-based line number for text input.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t location)
        : Error(what), location_(location) {}
    std::size_t location() const noexcept { return location_; }

private:
    std::size_t location_;
};

/// Invalid parameters or inconsistent configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Vector or model dimensions that do not line up.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Numerical breakdown (non-finite likelihood and the like).
class NumericalError : public Error {
public:
    using Error::Error;
};

} // namespace natfp
