#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nclasso {

/// Precondition violation on a public entry point.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Requested dimension is outside what the routine supports (e.g. grid search for d > 3).
class UnsupportedDimension : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

/// A non-finite value showed up during an iterative computation.
class NumericalFailure : public std::runtime_error {
public:
    NumericalFailure(const std::string& what, std::size_t iterate)
        : std::runtime_error(what + " (iterate " + std::to_string(iterate) + ")"), iterate_(iterate) {}

    std::size_t iterate() const noexcept { return iterate_; }

private:
    std::size_t iterate_;
};

/// File could not be opened, read, or written.
class IoError : public std::runtime_error {
public:
    IoError(const std::string& what, std::string path)
        : std::runtime_error(what + ": " + path), path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

}  // namespace nclasso
