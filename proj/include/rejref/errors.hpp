#pragma once

#include <stdexcept>
#include <string>

namespace rejref {

// Error categories map onto distinct CLI exit codes (see tools/rejref.cpp).

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConvergenceError : std::runtime_error {
    ConvergenceError(const std::string& what, double residual)
        : std::runtime_error(what + " (last residual " + std::to_string(residual) + ")"),
          last_residual(residual) {}
    double last_residual;
};

struct VerificationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace rejref
