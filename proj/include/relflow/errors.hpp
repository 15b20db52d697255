#pragma once

#include <stdexcept>
#include <string>

namespace relflow {

/// Bad input: malformed files, invalid configuration, violated preconditions.
/// Maps to CLI exit code 1.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical failure at runtime: divergence, non-finite intermediates.
/// Maps to CLI exit code 2.
class ComputeError : public std::runtime_error {
public:
    explicit ComputeError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace relflow
