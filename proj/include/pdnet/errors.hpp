#pragma once

#include <stdexcept>
#include <string>

namespace pdnet {

// Each error family maps onto one process exit code in the CLI
// (usage 1, data 2, numeric 3).

/// Malformed arguments, shapes or configuration supplied by the caller.
class UsageError : public std::invalid_argument {
public:
    explicit UsageError(const std::string& what) : std::invalid_argument(what) {}
};

/// Missing/corrupt files, degenerate datasets, contract violations on data.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// NaN/Inf produced during computation.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace pdnet
