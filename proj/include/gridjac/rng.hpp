#pragma once

#include <cstdint>
#include <random>

namespace gridjac {

//! splitmix64 step; used to derive independent substream seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d2a03f84965cd2ULL ^ 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

//! Seed for the substream identified by (root seed, stream tag, index).
//!
//! Streams derived with distinct (tag, index) pairs are statistically
//! independent, which is what the per-node noise generation relies on.
inline std::uint64_t substream_seed(std::uint64_t root, std::uint64_t tag,
                                    std::uint64_t index = 0) {
    std::uint64_t s = root;
    std::uint64_t a = splitmix64(s);
    s ^= tag * 0x9e3779b97f4a7c15ULL;
    std::uint64_t b = splitmix64(s);
    s ^= index + 0xd1b54a32d192ed03ULL;
    std::uint64_t c = splitmix64(s);
    return a ^ (b << 1) ^ c;
}

//! Named 64-bit generator used everywhere randomness is needed.
using Rng = std::mt19937_64;

inline Rng substream(std::uint64_t root, std::uint64_t tag,
                     std::uint64_t index = 0) {
    return Rng(substream_seed(root, tag, index));
}

// Stream tags (arbitrary distinct constants).
namespace stream {
inline constexpr std::uint64_t kRenewables  = 0x72656e6577ULL;
inline constexpr std::uint64_t kMeasurement = 0x6d656173ULL;
inline constexpr std::uint64_t kGeneric     = 0x67656eULL;
} // namespace stream

} // namespace gridjac
