#pragma once

#include <cstdint>
#include <cmath>
#include <stdexcept>

namespace cotdma {

namespace detail {

// SplitMix64 finalizer.  Used both as the per-stream generator step and to
// derive independent stream states from (seed, stream_id).
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

} // namespace detail

// Deterministic pseudo-random stream.  A stream is fully determined by the
// pair (seed, stream_id): the state is derived by a counter-based split, so
// adding new streams (new devices/flows) never perturbs existing ones.
class RngStream {
  public:
    RngStream() : state_(detail::mix64(0x9E3779B97F4A7C15ull)) {}

    RngStream(std::uint64_t seed, std::uint64_t stream_id) {
        state_ = detail::mix64(seed + 0x9E3779B97F4A7C15ull * (stream_id + 1));
        state_ = detail::mix64(state_ ^ 0xD1B54A32D192ED03ull);
        if (state_ == 0) {
            state_ = 0x2545F4914F6CDD1Dull;
        }
    }

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        return detail::mix64(state_);
    }

    // Uniform double in [0, 1).
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, cw].  cw must be of the form 2^k - 1 (EDCA
    // contention windows always are), which makes masking unbiased.
    std::uint32_t uniform_cw(std::uint32_t cw) {
        if ((cw & (cw + 1)) != 0) {
            throw std::invalid_argument("uniform_cw: bound is not 2^k - 1");
        }
        return static_cast<std::uint32_t>(next_u64()) & cw;
    }

    // Uniform integer in [0, n).
    std::uint64_t uniform_below(std::uint64_t n) {
        if (n == 0) {
            throw std::invalid_argument("uniform_below: empty range");
        }
        // Rejection sampling on the top bits; bias-free.
        const std::uint64_t limit = ~0ull - (~0ull % n);
        std::uint64_t v = next_u64();
        while (v > limit) {
            v = next_u64();
        }
        return v % n;
    }

    // Standard normal via Box-Muller.  Two draws per call, no cached spare,
    // so the draw count per sample is fixed and reproducible.
    double normal(double mean, double stddev) {
        double u1 = uniform01();
        while (u1 <= 0.0) {
            u1 = uniform01();
        }
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(6.283185307179586 * u2);
    }

    // Normal truncated to x >= lo by rejection; mean/stddev are the
    // parameters of the parent distribution.
    double truncated_normal(double mean, double stddev, double lo) {
        for (int i = 0; i < 1024; ++i) {
            const double x = normal(mean, stddev);
            if (x >= lo) {
                return x;
            }
        }
        return lo;
    }

    // Lognormal parameterized by the target arithmetic mean and coefficient
    // of variation.
    double lognormal_mean_cv(double mean, double cv) {
        const double sigma2 = std::log(1.0 + cv * cv);
        const double mu = std::log(mean) - 0.5 * sigma2;
        return std::exp(normal(mu, std::sqrt(sigma2)));
    }

  private:
    std::uint64_t state_;
};

// Stream id salts, one namespace per consumer so (device, purpose) pairs are
// collision free no matter how the scenario is grown.
namespace stream_salt {
inline constexpr std::uint64_t kPlacement = 0x01ull << 56;
inline constexpr std::uint64_t kTrafficSize = 0x02ull << 56;
inline constexpr std::uint64_t kTrafficIat = 0x03ull << 56;
inline constexpr std::uint64_t kBackoff = 0x04ull << 56;
} // namespace stream_salt

} // namespace cotdma
