#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace specsplit {

/// Failure categories. The CLI maps each one onto an exit code.
enum class ErrorKind {
    invalid_parameter,
    invalid_domain,
    placement,
    lookup,
    meshing,
    amplitude_too_large,
    solver,
    degenerate_discriminant,
    split_failed,
    budget_violation,
    invariant_failure,
    geometry,
    io,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::invalid_parameter: return "invalid_parameter";
        case ErrorKind::invalid_domain: return "invalid_domain";
        case ErrorKind::placement: return "placement";
        case ErrorKind::lookup: return "lookup";
        case ErrorKind::meshing: return "meshing";
        case ErrorKind::amplitude_too_large: return "amplitude_too_large";
        case ErrorKind::solver: return "solver";
        case ErrorKind::degenerate_discriminant: return "degenerate_discriminant";
        case ErrorKind::split_failed: return "split_failed";
        case ErrorKind::budget_violation: return "budget_violation";
        case ErrorKind::invariant_failure: return "invariant_failure";
        case ErrorKind::geometry: return "geometry";
        case ErrorKind::io: return "io";
    }
    return "unknown";
}

/// Process exit code for a failure of this kind: 2 for bad input, 3 for
/// numerical failure.
inline int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::meshing:
        case ErrorKind::amplitude_too_large:
        case ErrorKind::solver:
        case ErrorKind::degenerate_discriminant:
        case ErrorKind::split_failed:
        case ErrorKind::invariant_failure: return 3;
        default: return 2;
    }
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Thrown by mesh motion when an element collapses; carries the largest
/// amplitude found safe by bisection.
class AmplitudeTooLarge : public Error {
public:
    AmplitudeTooLarge(const std::string& what, double max_safe_t)
        : Error(ErrorKind::amplitude_too_large, what), max_safe_t_(max_safe_t) {}

    double max_safe_t() const noexcept { return max_safe_t_; }

private:
    double max_safe_t_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
    throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
    if (!cond) fail(kind, what);
}

}  // namespace specsplit
