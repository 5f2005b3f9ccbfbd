#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ijat {

// Base class for everything this library throws.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Operand shapes do not fit a primitive. Message names the primitive and
// the offending shapes.
struct ShapeError : Error {
    using Error::Error;
};

// A computed value came out NaN or infinite. Carries the flat location
// (row, col) where it was first seen.
struct NonFiniteError : Error {
    std::size_t row = 0;
    std::size_t col = 0;
    NonFiniteError(const std::string& msg, std::size_t r, std::size_t c)
        : Error(msg), row(r), col(c) {}
};

// Invalid run configuration (e.g. exact attribution on an unshifted model).
struct ConfigError : Error {
    using Error::Error;
};

// Degenerate statistical input (constant series and the like).
struct DegenerateInputError : Error {
    using Error::Error;
};

// File-level problems, split so callers can tell them apart.
struct IoError : Error {
    using Error::Error;
};
struct FormatVersionError : IoError {
    using IoError::IoError;
};
struct TruncatedFileError : IoError {
    using IoError::IoError;
};
struct ChecksumError : IoError {
    using IoError::IoError;
};

}  // namespace ijat
