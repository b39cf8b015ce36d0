#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace kle {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
    using Error::Error;
};

namespace detail {
inline std::string short_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}
} // namespace detail

// Least-squares fit left a boundary defect above the requested tolerance.
struct ResidualExceeded : Error {
    ResidualExceeded(double residual, double tol)
        : Error("boundary residual " + detail::short_double(residual) +
                " exceeds tolerance " + detail::short_double(tol)),
          residual(residual), tol(tol) {}
    double residual;
    double tol;
};

struct IllConditioned : Error {
    using Error::Error;
};

struct NonConvergent : Error {
    using Error::Error;
};

struct PoleProximity : Error {
    using Error::Error;
};

struct MinStepUnderflow : Error {
    using Error::Error;
};

struct BoundaryHit : Error {
    explicit BoundaryHit(double t)
        : Error("trajectory reached the outer boundary at t=" + std::to_string(t)),
          time(t) {}
    double time;
};

struct CollisionUnderflow : Error {
    using Error::Error;
};

} // namespace kle
