#pragma once

#include <stdexcept>
#include <string>

namespace esrt {

// Error taxonomy used across the library. All derive from std::runtime_error
// so callers that don't care about the kind can catch one type.

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

struct ArgError : std::runtime_error {
    explicit ArgError(const std::string& msg) : std::runtime_error("argument error: " + msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

struct TapeError : std::runtime_error {
    explicit TapeError(const std::string& msg) : std::runtime_error("tape error: " + msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error("data error: " + msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error("io error: " + msg) {}
};

}  // namespace esrt
