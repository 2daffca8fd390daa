#pragma once

#include <stdexcept>
#include <string>

namespace symmflow {

// Error taxonomy shared across the library. CLI maps these to exit codes.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidArgument : Error {
    using Error::Error;
};

struct PaletteExhausted : Error {
    using Error::Error;
};

// Non-finite values encountered during integration or training.
struct NumericError : Error {
    explicit NumericError(const std::string& msg, long step = -1)
        : Error(msg), step_index(step) {}
    long step_index;
};

struct FormatError : Error {
    using Error::Error;
};

struct DataError : Error {
    using Error::Error;
};

struct InvalidState : Error {
    using Error::Error;
};

struct UndefinedMetric : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct FingerprintMismatch : Error {
    using Error::Error;
};

}  // namespace symmflow
