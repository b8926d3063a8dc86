#pragma once

#include <cstdint>
#include <random>

namespace thinflow {

/// Deterministic RNG wrapper. We avoid std::uniform_real_distribution on purpose:
/// its output is implementation-defined, and sweep CSVs must be byte-identical
/// for a given seed regardless of the standard library in use.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed), seed_(seed) {}

    /// uniform in [0,1) with 53 random bits
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    /// uniform integer in [lo, hi], inclusive, rejection sampled (no modulo bias)
    int uniform_int(int lo, int hi) {
        const std::uint64_t n = static_cast<std::uint64_t>(hi - lo + 1);
        std::uint64_t x, r;
        do {
            x = eng_();
            r = x % n;
        } while (x - r > std::uint64_t(0) - n);
        return lo + static_cast<int>(r);
    }

    /// independent child stream; draws from one stream never affect another
    Rng fork(std::uint64_t stream) const {
        std::uint64_t z = seed_ ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
        // splitmix64 finalizer to decorrelate nearby seeds
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return Rng(z ^ (z >> 31));
    }

private:
    std::mt19937_64 eng_;
    std::uint64_t seed_;
};

} // namespace thinflow
