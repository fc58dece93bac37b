#pragma once

#include <stdexcept>
#include <string>

namespace genda {

// Error classes map 1:1 onto CLI exit codes (see exit_code_for below).
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// unreadable/unwritable files, malformed binary containers
struct IoError : Error {
    using Error::Error;
};

// invalid or out-of-range configuration, unknown keys, bad flags
struct ConfigError : Error {
    using Error::Error;
};

// training aborted: loss exceeded the guard or went non-finite
struct DivergenceError : Error {
    using Error::Error;
};

// tensor shape mismatches and incompatible checkpoint/artifact dimensions
struct ShapeError : Error {
    using Error::Error;
};

// feature sets produced by different embedders must not be compared
struct FingerprintError : Error {
    using Error::Error;
};

// non-finite values encountered inside the graph engine
struct NonFiniteError : Error {
    using Error::Error;
};

inline int exit_code_for(const Error& e) {
    if (dynamic_cast<const IoError*>(&e)) return 1;
    if (dynamic_cast<const ConfigError*>(&e)) return 2;
    if (dynamic_cast<const DivergenceError*>(&e)) return 3;
    if (dynamic_cast<const NonFiniteError*>(&e)) return 3;
    if (dynamic_cast<const ShapeError*>(&e)) return 4;
    if (dynamic_cast<const FingerprintError*>(&e)) return 5;
    return 1;
}

}  // namespace genda
