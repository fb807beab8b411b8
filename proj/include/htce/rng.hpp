#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>
#include <vector>

namespace htce {

/// FNV-1a over a byte sequence; used to derive independent seeds from a
/// master seed plus a stream tag, and by the harness cell-seed discipline.
inline std::uint64_t hash_bytes(std::uint64_t h, const void* bytes, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t hash_init() { return 0xcbf29ce484222325ULL; }

inline std::uint64_t hash_mix(std::uint64_t h, std::uint64_t v) {
    return hash_bytes(h, &v, sizeof(v));
}

inline std::uint64_t hash_mix(std::uint64_t h, std::string_view s) {
    h = hash_bytes(h, s.data(), s.size());
    return hash_mix(h, static_cast<std::uint64_t>(s.size()));
}

inline std::uint64_t hash_mix(std::uint64_t h, double v) {
    return hash_bytes(h, &v, sizeof(v));
}

template <typename... Parts>
std::uint64_t derive_seed(std::uint64_t seed, Parts... parts) {
    std::uint64_t h = hash_mix(hash_init(), seed);
    ((h = hash_mix(h, parts)), ...);
    return h;
}

/// Seedable generator. One instance per logical stream; identical seeds give
/// identical streams. The distribution transforms are implemented here rather
/// than with std:: distributions so a stream never depends on library
/// internals that may change between standard library releases.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi], inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
        if (range == 0) return static_cast<std::int64_t>(gen_());  // full 64-bit range
        const std::uint64_t bound = std::numeric_limits<std::uint64_t>::max() - (std::numeric_limits<std::uint64_t>::max() % range + 1) % range;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x > bound);
        return lo + static_cast<std::int64_t>(x % range);
    }

    /// Standard normal via Box-Muller (two uniforms per draw, no caching).
    double normal() {
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    bool bernoulli(double p) { return uniform() < p; }

    /// Fisher-Yates permutation of 0..n-1.
    std::vector<std::size_t> permutation(std::size_t n) {
        std::vector<std::size_t> p(n);
        for (std::size_t i = 0; i < n; ++i) p[i] = i;
        for (std::size_t i = n; i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(p[i - 1], p[j]);
        }
        return p;
    }

    /// k distinct values from 0..n-1, in draw order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
        auto p = permutation(n);
        p.resize(k);
        return p;
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace htce
