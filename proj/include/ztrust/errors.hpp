// Error taxonomy shared across the library: configuration problems map to
// exit code 2 at the CLI, I/O and artifact-encoding problems to exit code 3.
#pragma once

#include <stdexcept>
#include <string>

namespace ztrust {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ztrust
