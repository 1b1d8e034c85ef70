#pragma once

#include <stdexcept>
#include <string>

namespace siggpde {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad input: malformed files, mismatched dimensions, invalid configuration.
class ValidationError : public Error {
public:
    using Error::Error;
};

class ParseError : public ValidationError {
public:
    ParseError(const std::string& what, long row)
        : ValidationError(row >= 0 ? "row " + std::to_string(row) + ": " + what : what), row_(row) {}
    long row() const noexcept { return row_; }

private:
    long row_;
};

// Non-finite values, divergence, inconsistent posterior variances.
class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace siggpde
