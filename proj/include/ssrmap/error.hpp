#pragma once

#include <stdexcept>
#include <string>

namespace ssrmap {

// Broad failure categories. The CLI maps each one to its own exit code.
enum class ErrorKind {
    InvalidArgument,
    DimensionMismatch,
    Format,
    Io,
    ModelMismatch,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
    if (!condition) {
        fail(kind, message);
    }
}

const char* to_string(ErrorKind kind) noexcept;

} // namespace ssrmap
