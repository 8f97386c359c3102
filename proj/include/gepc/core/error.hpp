#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gepc {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor dimensions that do not agree with an operation's contract.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration values (even kernel size, no enabled branch, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed input record. Carries the 1-based line number when known.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Well-formed input that disagrees with the declared layout.
class SchemaError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf produced by a forward or backward pass, or a diverging loss.
class NumericError : public Error {
public:
    using Error::Error;
};

/// A mixture fit that cannot be supported by the data.
class DegenerateFitError : public Error {
public:
    using Error::Error;
};

}  // namespace gepc
