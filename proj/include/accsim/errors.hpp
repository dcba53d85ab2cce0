#pragma once

#include <stdexcept>
#include <string>

namespace accsim {

// Error categories map 1:1 onto the CLI exit codes (see tools/).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TrainingError : std::runtime_error {
    explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised when the QP solver fails to converge; the harness treats this as
// fatal and aborts the run with a distinct exit code.
struct ControllerFault : std::runtime_error {
    explicit ControllerFault(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace accsim
