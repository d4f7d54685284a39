#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>

namespace debias {

// SplitMix64 finalizer. Used both as a stream splitter and for hashing ids.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Counter-based split: the child seed depends only on the master seed and the
// ordered counter path, so streams are independent of generation order.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) noexcept {
    std::uint64_t s = mix64(master);
    for (auto c : path) {
        s = mix64(s ^ mix64(c + 0x632be59bd9b4e019ULL));
    }
    return s;
}

// Gaussian sampler with a fixed algorithm (Marsaglia polar), so simulated
// series are bit-identical across standard library implementations.
class NormalRng {
public:
    explicit NormalRng(std::uint64_t seed) : engine_(seed) {}

    double uniform() {
        // 53 random bits -> [0, 1)
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double standard_normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u = 0.0, v = 0.0, s = 0.0;
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

    double normal(double mean, double sd) { return mean + sd * standard_normal(); }

    std::uint64_t next_u64() { return engine_(); }

    // Unbiased index in [0, n).
    std::size_t index(std::size_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t r = 0;
        do {
            r = engine_();
        } while (r >= limit);
        return static_cast<std::size_t>(r % n);
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace debias
