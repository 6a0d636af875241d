#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace pmb {

inline constexpr const char* kVersion = "0.1.0";

/// Throws std::invalid_argument when a caller-facing precondition fails.
inline void require(bool cond, const std::string& what) {
    if (!cond) throw std::invalid_argument(what);
}

/// Throws std::runtime_error when an internal numeric invariant fails.
inline void ensure(bool cond, const std::string& what) {
    if (!cond) throw std::runtime_error(what);
}

inline constexpr double kInf = std::numeric_limits<double>::infinity();

inline double clamp01(double v) {
    if (v < 0.0) return 0.0;
    if (v > 1.0) return 1.0;
    return v;
}

inline double sqr(double v) { return v * v; }

} // namespace pmb
