#pragma once

#include <cmath>
#include <cstdint>

namespace uad {

// Counter-based random stream: every draw is a pure function of
// (seed, tag, index), so any parallel schedule sees the same values.
namespace rng {

constexpr double kTwoPi = 6.283185307179586476925286766559;

inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t key(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
    return mix64(mix64(mix64(seed) ^ tag) ^ index);
}

// uniform in (0,1]; never exactly 0 so log() is safe
inline double uniform(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
    return (static_cast<double>(key(seed, tag, index) >> 11) + 1.0) * 0x1.0p-53;
}

inline double normal(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
    double u1 = uniform(seed, tag, 2 * index);
    double u2 = uniform(seed, tag, 2 * index + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

// mean-1 gamma with integer shape k (sum of k exponentials, scaled)
inline double gamma_mean1(std::uint64_t seed, std::uint64_t tag, std::uint64_t index, int shape_k) {
    double acc = 0.0;
    for (int i = 0; i < shape_k; ++i)
        acc += -std::log(uniform(seed, tag, index * static_cast<std::uint64_t>(shape_k) + i));
    return acc / shape_k;
}

// Stream tags; fixed constants keep draws decoupled across purposes.
enum Tag : std::uint64_t {
    kTagForwardNoise = 0x01,
    kTagReverseNoise = 0x02,
    kTagTimestep = 0x03,
    kTagShuffle = 0x04,
    kTagInit = 0x05,
    kTagPhantom = 0x06,
    kTagSpeckle = 0x07,
    kTagAnomaly = 0x08,
    kTagAugment = 0x09,
    kTagExtractor = 0x0a,
    kTagResample = 0x0b,
    kTagSimplexPerm = 0x0c,
};

}  // namespace rng
}  // namespace uad
