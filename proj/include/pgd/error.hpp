#pragma once

#include <stdexcept>
#include <string>

namespace pgd {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad user input: malformed config, invalid parameter ranges, schema violations.
// The CLI maps this to exit code 1.
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Requested dense expansion exceeds the configured entry cap.
struct SizeCapError : Error {
    explicit SizeCapError(const std::string& msg) : Error(msg) {}
};

// Operands live on different tensor spaces.
struct SpaceMismatchError : Error {
    explicit SpaceMismatchError(const std::string& msg) : Error(msg) {}
};

// Numerical failure at run time: singular subproblem, non-finite values,
// violated runtime invariant. The CLI maps this to exit code 2.
struct NumericalError : Error {
    explicit NumericalError(const std::string& msg) : Error(msg) {}
};

} // namespace pgd
