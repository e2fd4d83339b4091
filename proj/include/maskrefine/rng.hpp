#pragma once

// splitmix64 PRNG. 64-bit state, fixed increment, two-round xor-shift-multiply
// mix. Every random draw in the toolkit flows through this so that any run is
// a pure function of its seeds.

#include <cmath>
#include <cstdint>
#include <vector>

namespace maskrefine {

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// One mixed output for a raw seed; used to derive independent sub-seeds.
inline std::uint64_t splitmix64_of(std::uint64_t seed) {
    return splitmix64_next(seed);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() { return splitmix64_next(state_); }

    // Uniform in [0, 1) with 53-bit resolution (value / 2^64 truncated so the
    // upper bound stays strict).
    double next_double01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [0, n). Modulo bias is immaterial at the ranges used here.
    std::uint32_t next_below(std::uint32_t n) {
        return static_cast<std::uint32_t>(next_u64() % n);
    }

    // Standard normal via Box-Muller, cosine branch. Consumes two uniforms per
    // draw; the log argument 1 - u1 is always in (0, 1].
    double next_gaussian() {
        const double u1 = next_double01();
        const double u2 = next_double01();
        constexpr double two_pi = 6.283185307179586476925286766559;
        return std::sqrt(-2.0 * std::log(1.0 - u1)) * std::cos(two_pi * u2);
    }

    std::uint64_t state() const { return state_; }

private:
    std::uint64_t state_;
};

// Fisher-Yates shuffle driven by the toolkit PRNG.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = rng.next_below(static_cast<std::uint32_t>(i));
        std::swap(v[i - 1], v[j]);
    }
}

} // namespace maskrefine
