#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace oal {

// Error categories; the C boundary maps these onto oal_status codes and the
// CLI maps them onto process exit codes.
enum class ErrorKind {
    invalid_argument,
    io,
    parse,
    numeric,
    metric_undefined,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string message)
        : std::runtime_error(std::move(message)), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

}  // namespace oal
