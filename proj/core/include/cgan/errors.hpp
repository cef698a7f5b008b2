#pragma once

#include <stdexcept>
#include <string>

namespace cgan {

// Bad input: invalid configuration, malformed files, contract violations.
// The CLI maps this to exit code 2.
class ValidationError : public std::invalid_argument {
public:
    explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

// Failure while running: non-finite losses, IO errors mid-run.
// The CLI maps this to exit code 3.
class RuntimeFailure : public std::runtime_error {
public:
    explicit RuntimeFailure(const std::string& what) : std::runtime_error(what) {}
};

// Training aborted because a loss went non-finite.
class DivergenceError : public RuntimeFailure {
public:
    explicit DivergenceError(const std::string& what) : RuntimeFailure(what) {}
};

}  // namespace cgan
