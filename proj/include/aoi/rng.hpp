#pragma once

#include <cstdint>
#include <random>
#include <string_view>

// Deterministic randomness.  Every stochastic component draws from an `Rng`
// seeded through `derive_seed`, which mixes a master seed with a structured
// path (agent name, sweep index, replicate index).  Identical seeds and
// configs reproduce runs bit-for-bit across machines because only fixed
// integer arithmetic and mt19937_64 are involved -- no distribution objects
// from <random>, whose outputs vary across standard libraries.

namespace aoi {

// splitmix64: tiny, well-mixed 64-bit stream used for seed derivation.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// FNV-1a, used to fold strings (agent names) into the seed path.
inline std::uint64_t hash_string(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Folds a sequence of path components into a master seed.  Order matters:
// derive_seed(m, {a, b}) != derive_seed(m, {b, a}) in general.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = master;
    for (std::uint64_t p : path) {
        s ^= p + 0x9e3779b97f4a7c15ULL + (s << 6) + (s >> 2);
        std::uint64_t t = s;
        s = splitmix64(t);
    }
    return s;
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform double in [0, 1) with 53 random bits; bit-reproducible.
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n); Lemire's multiply-shift (biased by < 2^-32
    // for any practical n, and fully deterministic).
    int uniform_int(int n) {
        const std::uint64_t x = gen_();
        return static_cast<int>(
            static_cast<std::uint64_t>((static_cast<unsigned __int128>(x) * static_cast<std::uint64_t>(n)) >> 64));
    }

    // Bernoulli(p) draw; the comparison direction is part of the
    // reproducibility contract (u < p means "event happens").
    bool bernoulli(double p) { return uniform() < p; }

private:
    std::mt19937_64 gen_;
};

}  // namespace aoi
