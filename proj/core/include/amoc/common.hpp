#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace amoc {

// Error taxonomy. Callers that need to distinguish failure modes (the CLI
// exit-code contract, loader diagnostics) catch these; everything derives
// from Error so a blanket catch still works.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Caller passed an out-of-contract value.
struct ArgumentError : Error {
    using Error::Error;
};

// A file or byte stream does not match its declared format.
struct FormatError : Error {
    using Error::Error;
};

// Configuration file / CLI flag problems.
struct ConfigError : Error {
    using Error::Error;
};

// A versioned artifact cannot be consumed by this build.
struct IncompatibilityError : Error {
    using Error::Error;
};

// Non-finite values where finite ones are required.
struct NumericError : Error {
    using Error::Error;
};

// Invariant violation inside the library (architecture drift etc.).
struct InternalError : Error {
    using Error::Error;
};

inline void check_arg(bool cond, const std::string& msg) {
    if (!cond) throw ArgumentError(msg);
}

inline void check_internal(bool cond, const std::string& msg) {
    if (!cond) throw InternalError(msg);
}

}  // namespace amoc
