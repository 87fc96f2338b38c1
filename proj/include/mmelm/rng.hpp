#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace mmelm {

/// SplitMix64 finalizer. Used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Folds a list of integers into one seed: derive_seed(master, point, trial).
inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) noexcept {
    std::uint64_t h = 0x6a09e667f3bcc909ULL;
    for (auto p : parts) h = mix64(h ^ mix64(p));
    return h;
}

// Fixed stream offsets off the master chip seed.
inline constexpr std::uint64_t kWeightStream = 1;
inline constexpr std::uint64_t kNeuronGainStream = 2;

/// Platform-stable generator. std::mt19937_64 output is fixed by the standard;
/// the distributions below are implemented here because the std:: ones are not.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // rejection sampling keeps the result unbiased
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t r;
        do {
            r = engine_();
        } while (r >= limit);
        return r % n;
    }

    /// Standard normal via the Marsaglia polar method.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        has_spare_ = true;
        return u * m;
    }

    template <typename It>
    void shuffle(It first, It last) {
        const auto n = static_cast<std::uint64_t>(last - first);
        for (std::uint64_t i = n; i > 1; --i) {
            const auto j = below(i);
            std::iter_swap(first + (i - 1), first + j);
        }
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace mmelm
