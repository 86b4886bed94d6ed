#pragma once

// Error taxonomy mirrored by the CLI exit codes: configuration problems
// (2), solver failures (3), estimation failures (4).

#include <stdexcept>
#include <string>

namespace nwtwin {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct SolverError : std::runtime_error {
    explicit SolverError(const std::string& what) : std::runtime_error(what) {}
};

struct EstimationError : std::runtime_error {
    explicit EstimationError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace nwtwin
