#ifndef VIDAGG_RNG_HPP
#define VIDAGG_RNG_HPP

#include <cstdint>
#include <random>
#include <vector>

namespace vidagg {

// splitmix64 finalizer; used to derive independent sub-seeds.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Bounded draw with a pinned sequence. std::uniform_int_distribution is
// implementation-defined, which would leak into golden outputs.
inline uint64_t bounded(std::mt19937_64& rng, uint64_t n) {
    return static_cast<uint64_t>((static_cast<__uint128_t>(rng()) * n) >> 64);
}

// 53-bit uniform in [0,1).
inline double unit_uniform(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <typename T>
void deterministic_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
    for (size_t i = 0; i + 1 < v.size(); ++i) {
        const size_t j = i + static_cast<size_t>(bounded(rng, v.size() - i));
        std::swap(v[i], v[j]);
    }
}

}  // namespace vidagg

#endif
