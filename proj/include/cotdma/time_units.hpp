#pragma once

#include <cstdint>
#include <cmath>

namespace cotdma {

// Simulated time is integer nanoseconds end to end; reporting converts to
// microseconds/milliseconds at the edges.  Integer time keeps event ordering
// exact across platforms.
using TimeNs = std::int64_t;

inline constexpr TimeNs kNsPerUs = 1'000;
inline constexpr TimeNs kNsPerMs = 1'000'000;
inline constexpr TimeNs kNsPerSec = 1'000'000'000;

constexpr TimeNs us_to_ns(std::int64_t us) { return us * kNsPerUs; }
constexpr TimeNs ms_to_ns(std::int64_t ms) { return ms * kNsPerMs; }

inline TimeNs us_to_ns(double us) { return static_cast<TimeNs>(std::llround(us * 1e3)); }
inline TimeNs ms_to_ns(double ms) { return static_cast<TimeNs>(std::llround(ms * 1e6)); }

constexpr double ns_to_us(TimeNs t) { return static_cast<double>(t) / 1e3; }
constexpr double ns_to_ms(TimeNs t) { return static_cast<double>(t) / 1e6; }
constexpr double ns_to_s(TimeNs t) { return static_cast<double>(t) / 1e9; }

} // namespace cotdma
