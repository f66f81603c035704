#pragma once

#include <cstdint>
#include <random>

namespace pgd {

// Deterministic uniform doubles on top of mt19937_64. std::uniform_real_distribution
// is implementation-defined, so the u64 -> double mapping is spelled out here to keep
// seeded runs reproducible across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    // uniform in [lo, hi)
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    std::uint64_t raw() { return eng_(); }

private:
    std::mt19937_64 eng_;
};

// splitmix64 step; used to derive stream seeds (per step / per start) from one base seed
// without correlated low bits.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t salt) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace pgd
