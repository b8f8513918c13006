#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace pqvae {

// Seeded PRNG with hand-rolled output transforms. std::uniform_real_distribution
// and friends are implementation-defined, which would tie reproducibility to a
// particular standard library; the raw mt19937_64 stream is portable.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), bias removed by rejection.
    std::uint64_t uniform_index(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = gen_();
        while (x >= limit) x = gen_();
        return x % n;
    }

    // Standard normal via Box-Muller. Two uniforms per draw, no cached spare,
    // so the stream position is a pure function of the number of calls.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Derived stream for one consumer. Different salts decouple consumers so
    // adding a draw in one component does not shift the others.
    static Rng with_salt(std::uint64_t seed, std::uint64_t salt) {
        std::uint64_t s = seed * 0x9e3779b97f4a7c15ull + salt;
        s ^= s >> 30;
        s *= 0xbf58476d1ce4e5b9ull;
        s ^= s >> 27;
        return Rng(s);
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace pqvae
