#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include "pmb/common.hpp"

namespace pmb {

/// splitmix64 step; used for seeding and stream derivation.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Derives an independent stream seed from (master, index); used to hand
/// per-run and per-cell generators out to workers so results do not depend
/// on scheduling.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    std::uint64_t s = master ^ (0x9e3779b97f4a7c15ull * (index + 1));
    splitmix64(s);
    return splitmix64(s);
}

/// xoshiro256** with hand-rolled samplers. The standard <random>
/// distributions are implementation-defined, which would tie cached kernel
/// files and golden CSVs to a particular libstdc++; this keeps every draw
/// bit-reproducible.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t s = seed;
        for (auto& word : state_) word = splitmix64(s);
    }

    Rng(std::uint64_t master, std::uint64_t stream) : Rng(derive_seed(master, stream)) {}

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform on [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform on [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    /// Poisson sample by Knuth's product method; fine for the rates used
    /// here (<= ~50, where exp(-mean) is still comfortably above DBL_MIN).
    int poisson(double mean) {
        require(mean >= 0.0, "poisson: mean must be nonnegative");
        if (mean == 0.0) return 0;
        const double limit = std::exp(-mean);
        int count = 0;
        double product = uniform();
        while (product > limit) {
            ++count;
            product *= uniform();
        }
        return count;
    }

    /// Uniform integer on [0, n).
    std::uint64_t uniform_index(std::uint64_t n) {
        // Modulo bias is ~n / 2^64; irrelevant at these sizes.
        return next_u64() % n;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::array<std::uint64_t, 4> state_{};
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace pmb
