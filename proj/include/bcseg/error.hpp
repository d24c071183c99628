#pragma once

#include <stdexcept>
#include <string>

namespace bcseg {

/// Broad failure families. The CLI maps them onto exit codes.
enum class ErrorKind { usage, data, backend };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Malformed input files, invalid geometry, inconsistent cohorts.
class DataError : public Error {
public:
    explicit DataError(const std::string& message) : Error(ErrorKind::data, message) {}
};

/// Invalid configuration or command-line usage.
class UsageError : public Error {
public:
    explicit UsageError(const std::string& message) : Error(ErrorKind::usage, message) {}
};

/// Model backend failures: spawn, handshake, protocol violations, crashes.
class BackendError : public Error {
public:
    explicit BackendError(const std::string& message) : Error(ErrorKind::backend, message) {}
};

}  // namespace bcseg
