#pragma once

#include <cstdint>

namespace adave {

// splitmix64. All seeded randomness in the project flows through this
// generator so that results are bit-identical across platforms (no libm,
// no implementation-defined distributions).
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint32_t next_u32() { return static_cast<std::uint32_t>(next() >> 32); }

    // Uniform in [0, 1), 24 bits of mantissa.
    float next_float() {
        return static_cast<float>(next() >> 40) * (1.0f / 16777216.0f);
    }

    // Uniform in [-1, 1).
    float next_float_signed() { return next_float() * 2.0f - 1.0f; }

    // Uniform in [0, n) without modulo bias worth caring about here.
    std::uint32_t next_below(std::uint32_t n) {
        return static_cast<std::uint32_t>((static_cast<std::uint64_t>(next_u32()) * n) >> 32);
    }

    std::uint8_t next_byte() { return static_cast<std::uint8_t>(next() >> 56); }

private:
    std::uint64_t state_;
};

// Derives an independent stream from (seed, a, b). Used to give every
// frame/block/matrix its own generator without coupling their sequences.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    SplitMix64 g(seed ^ (0x517cc1b727220a95ULL + a * 0x2545f4914f6cdd1dULL));
    g.next();
    std::uint64_t s = g.next() ^ (b * 0x9e3779b97f4a7c15ULL);
    return s == 0 ? 0x6b79ULL : s;
}

}  // namespace adave
