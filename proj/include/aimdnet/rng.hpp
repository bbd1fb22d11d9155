#ifndef AIMDNET_RNG_HPP
#define AIMDNET_RNG_HPP

#include <cmath>
#include <cstdint>

namespace aimd {

// SplitMix64 (Steele/Lea/Flood). Used to derive stream states from seeds.
struct SplitMix64 {
    std::uint64_t state;

    explicit SplitMix64(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
};

// xoshiro256** (Blackman/Vigna). One instance per particle/start gives
// independent streams: changing the particle count never perturbs the
// draws of other particles.
struct Xoshiro256 {
    std::uint64_t s[4] = {1, 2, 3, 4};

    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(s[1] * 5, 7) * 9;
        const std::uint64_t t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = rotl(s[3], 45);
        return result;
    }

    // uniform in [0,1)
    double uniform01() {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    // standard exponential; finite because uniform01() < 1
    double exponential() {
        return -std::log1p(-uniform01());
    }
};

// Stream tags keep the seed-derivation domains disjoint.
enum class StreamTag : std::uint64_t {
    Particle = 1,      // key = (class << 40) | particle index
    ScanStart = 2,     // key = start index
    Pilot = 3,
};

inline Xoshiro256 derive_stream(std::uint64_t seed, StreamTag tag, std::uint64_t key) {
    SplitMix64 sm(seed);
    std::uint64_t h = sm.next() ^ (static_cast<std::uint64_t>(tag) * 0xd6e8feb86659fd93ULL);
    h ^= key + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    SplitMix64 filler(h);
    Xoshiro256 rng;
    for (auto& word : rng.s) word = filler.next();
    // all-zero state is invalid for xoshiro; splitmix cannot emit four zeros
    // from distinct inputs, but guard anyway
    if ((rng.s[0] | rng.s[1] | rng.s[2] | rng.s[3]) == 0) rng.s[0] = 1;
    return rng;
}

inline Xoshiro256 particle_stream(std::uint64_t seed, int class_index, std::uint64_t particle) {
    const std::uint64_t key = (static_cast<std::uint64_t>(class_index) << 40) | particle;
    return derive_stream(seed, StreamTag::Particle, key);
}

} // namespace aimd

#endif
