#pragma once

#include <stdexcept>
#include <string>

namespace rtl {

// Error categories map onto CLI exit codes: config -> 2, data -> 3,
// everything numeric (shape, degenerate input, non-finite) -> 4.
enum class ErrorKind {
    config,
    data,
    shape,
    degenerate,
    numeric,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

    const char* category() const {
        switch (kind_) {
            case ErrorKind::config: return "config";
            case ErrorKind::data: return "data";
            case ErrorKind::shape: return "shape";
            case ErrorKind::degenerate: return "degenerate";
            case ErrorKind::numeric: return "numeric";
        }
        return "unknown";
    }

    int exit_code() const {
        switch (kind_) {
            case ErrorKind::config: return 2;
            case ErrorKind::data: return 3;
            default: return 4;
        }
    }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void throw_config(const std::string& msg) { throw Error(ErrorKind::config, msg); }
[[noreturn]] inline void throw_data(const std::string& msg) { throw Error(ErrorKind::data, msg); }
[[noreturn]] inline void throw_shape(const std::string& msg) { throw Error(ErrorKind::shape, msg); }
[[noreturn]] inline void throw_degenerate(const std::string& msg) { throw Error(ErrorKind::degenerate, msg); }
[[noreturn]] inline void throw_numeric(const std::string& msg) { throw Error(ErrorKind::numeric, msg); }

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
    if (!cond) throw Error(kind, msg);
}

}  // namespace rtl
