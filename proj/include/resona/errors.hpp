#pragma once

#include <stdexcept>
#include <string>

namespace resona {

/// Base error; carries the process exit code used by the CLI.
class Error : public std::runtime_error {
public:
    Error(const std::string& kind, const std::string& msg, int code)
        : std::runtime_error(msg), kind_(kind), code_(code) {}
    const std::string& kind() const { return kind_; }
    int exit_code() const { return code_; }

private:
    std::string kind_;
    int code_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error("config", msg, 2) {}
};

class ConvergenceError : public Error {
public:
    explicit ConvergenceError(const std::string& msg) : Error("convergence", msg, 3) {}
};

class PreconditionError : public Error {
public:
    explicit PreconditionError(const std::string& msg) : Error("precondition", msg, 4) {}
};

class DomainError : public Error {
public:
    explicit DomainError(const std::string& msg) : Error("domain", msg, 4) {}
};

class OverflowError : public Error {
public:
    explicit OverflowError(const std::string& msg) : Error("overflow", msg, 3) {}
};

}  // namespace resona
