#ifndef KFAT_ERRORS_HPP
#define KFAT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace kfat {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid configuration values, unknown config keys, violated parameter invariants.
class ConfigError : public Error {
public:
    using Error::Error;
};

// File I/O and parse problems (malformed CSV/JSON, schema mismatches).
class DataError : public Error {
public:
    using Error::Error;
};

// Non-finite results, failed factorizations, degenerate numeric inputs.
class NumericalError : public Error {
public:
    using Error::Error;
};

// Kinematic quantities undefined below the minimum longitudinal speed.
class LowSpeedError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

// Filter state became unusable (non-finite mean or unrepairable covariance).
class DivergedError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

} // namespace kfat

#endif
