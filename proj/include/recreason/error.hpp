#pragma once

#include <stdexcept>
#include <string>

namespace recreason {

/// Base error. `code()` is a stable machine-readable identifier
/// (e.g. "InsufficientData") used by the CLI error line.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& message) : Error("ConfigError", message) {}
};

class InsufficientData : public Error {
public:
    explicit InsufficientData(const std::string& message)
        : Error("InsufficientData", message) {}
};

class InvalidInput : public Error {
public:
    InvalidInput(std::string code, const std::string& message)
        : Error(std::move(code), message) {}
};

} // namespace recreason
