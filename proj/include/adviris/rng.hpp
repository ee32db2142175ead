#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>

namespace adviris {

// Seed mixing for hierarchical determinism (master -> identity -> sample,
// master -> sweep cell -> trial).  splitmix64 finalizer; good avalanche,
// stable across platforms.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return mix_seed(mix_seed(a, b), c);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
    return mix_seed(mix_seed(a, b, c), d);
}

// mt19937_64 with explicit value transforms.  The engine's output sequence is
// pinned by the standard; std::*_distribution mappings are not, so all draws
// go through these helpers to keep seeded runs byte-identical everywhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // uniform in [0,1)
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("Rng::below: empty range");
        // rejection sampling avoids modulo bias
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do { x = eng_(); } while (x >= limit);
        return x % n;
    }

    int range(int lo, int hi) {  // inclusive lo, exclusive hi
        return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo)));
    }

    bool coin() { return (eng_() & 1u) != 0; }

private:
    std::mt19937_64 eng_;
};

}  // namespace adviris
