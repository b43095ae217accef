#pragma once

#include <stdexcept>

namespace dpcl {

// Error categories map onto CLI exit codes (see tools/dpcl_cli.cpp):
// ConfigError -> 2, DataError -> 3, NumericError -> 4.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised when a computation produces non-finite values or violates a numeric
// contract at runtime (as opposed to a misconfigured experiment or bad data).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace dpcl
