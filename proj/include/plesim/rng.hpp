#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace plesim {

/// Counter-based random stream. Each (seed, index) pair opens an
/// independent stream, so grid points can be sampled in any order or in
/// parallel and still reproduce the serial result bit for bit.
class CounterRng {
  public:
    CounterRng(std::uint64_t seed, std::uint64_t index)
        : state_(mix(mix(seed + 0x9e3779b97f4a7c15ULL) ^ mix(index + 0xbf58476d1ce4e5b9ULL))) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix(state_);
    }

    /// Uniform double in [0, 1).
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

  private:
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
};

namespace detail {

inline double log_factorial(double k) {
    return std::lgamma(k + 1.0);
}

// Transformed rejection with squeeze (Hoermann's PTRS), valid for mean >= 10.
inline long poisson_ptrs(CounterRng& rng, double mean) {
    const double b = 0.931 + 2.53 * std::sqrt(mean);
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double v_r = 0.9277 - 3.6224 / (b - 2.0);
    const double log_mean = std::log(mean);
    for (;;) {
        double u = rng.next_double() - 0.5;
        double v = rng.next_double();
        double us = 0.5 - std::abs(u);
        double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
        if (us >= 0.07 && v <= v_r) {
            return static_cast<long>(k);
        }
        if (k < 0.0 || (us < 0.013 && v > us)) {
            continue;
        }
        if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
            k * log_mean - mean - log_factorial(k)) {
            return static_cast<long>(k);
        }
    }
}

// Inversion by sequential search; cheap for small means.
inline long poisson_knuth(CounterRng& rng, double mean) {
    const double limit = std::exp(-mean);
    double product = rng.next_double();
    long count = 0;
    while (product > limit) {
        product *= rng.next_double();
        ++count;
    }
    return count;
}

}  // namespace detail

/// One Poisson draw with the given mean. Hand-rolled so results are
/// identical across standard library implementations.
inline long poisson_draw(CounterRng& rng, double mean) {
    if (!(mean >= 0.0) || !std::isfinite(mean)) {
        throw std::invalid_argument("rng: Poisson mean must be finite and nonnegative");
    }
    if (mean == 0.0) {
        return 0;
    }
    return mean < 10.0 ? detail::poisson_knuth(rng, mean) : detail::poisson_ptrs(rng, mean);
}

}  // namespace plesim
