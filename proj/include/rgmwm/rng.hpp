#ifndef RGMWM_RNG_HPP
#define RGMWM_RNG_HPP

#include <cstdint>
#include <random>

namespace rgmwm {

// splitmix64 step; used to derive independent substreams from a user seed so
// that replicate results do not depend on scheduling order.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream = 0) {
    return mix64(mix64(seed ^ 0xa55a5aa5f00dfeedULL) + mix64(stream) + 3 * mix64(substream + 1));
}

inline std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream = 0,
                                   std::uint64_t substream = 0) {
    return std::mt19937_64(stream_seed(seed, stream, substream));
}

} // namespace rgmwm

#endif
