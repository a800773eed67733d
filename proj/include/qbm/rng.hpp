#pragma once

#include <cmath>
#include <cstdint>

namespace qbm {

// SplitMix64 step. Small state, passes BigCrush, and bit-reproducible on
// every platform, which the determinism contract of the ensemble runners
// relies on.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Counter-based seed derivation: trajectory i of a run with a given master
// seed always receives the same stream, independent of scheduling order or
// thread count.
inline std::uint64_t split_seed(std::uint64_t master_seed, std::uint64_t index) {
    std::uint64_t s = master_seed ^ ((index + 1) * 0x9e3779b97f4a7c15ULL);
    return splitmix64(s);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() { return splitmix64(state_); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller (explicit so results do not depend on
    // the standard library's distribution implementation).
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = 1.0 - uniform(); // (0, 1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    // Exp(1) waiting time.
    double exponential() { return -std::log(1.0 - uniform()); }

    bool coin() { return (next_u64() & 1ULL) != 0; }

private:
    std::uint64_t state_;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

} // namespace qbm
