#pragma once

#include <stdexcept>
#include <string>

namespace bertkit {

#ifdef BERTKIT_VERSION
inline constexpr const char* kVersion = BERTKIT_VERSION;
#else
inline constexpr const char* kVersion = "0.0.0";
#endif

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration values, bad patterns, out-of-range arguments.
struct ConfigError : Error {
    using Error::Error;
};

// Malformed input data: bad encodings, bad labels, short rows.
struct DataError : Error {
    using Error::Error;
};

// Missing files, unreadable or unwritable paths.
struct IoError : Error {
    using Error::Error;
};

// NaN losses or gradients, divergent training.
struct NumericError : Error {
    using Error::Error;
};

}  // namespace bertkit
