#pragma once

#include <stdexcept>
#include <string>

namespace covit {

// All library failures derive from Error so the CLI can report them uniformly.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
    using Error::Error;
};

// Non-finite value produced or consumed by a numeric op.
struct NumericError : Error {
    using Error::Error;
};

// Malformed or truncated file content.
struct FormatError : Error {
    using Error::Error;
};

struct DataError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

}  // namespace covit
