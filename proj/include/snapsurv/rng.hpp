#pragma once

// Deterministic randomness. Every stochastic component (simulation, grid
// draws, splits, initialization, dropout, shuffling) derives its own
// mt19937_64 stream from a (seed, label, index...) key, so results do not
// depend on call order or scheduling and runs are exactly repeatable.
//
// Uniform doubles are built from the top 53 bits of the generator output;
// std::uniform_real_distribution is implementation-defined and is not used.

#include <cstdint>
#include <random>

namespace snapsurv {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a over a string literal; used to turn stream labels into salts.
inline constexpr std::uint64_t stream_tag(const char* s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (; *s != '\0'; ++s) {
    h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(*s));
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a) {
  return splitmix64(seed ^ splitmix64(a));
}
inline constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return mix_seed(mix_seed(seed, a), b);
}
inline constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                                        std::uint64_t c) {
  return mix_seed(mix_seed(seed, a, b), c);
}

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(seed); }

// Uniform on [0, 1).
inline double uniform01(std::mt19937_64& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

// Uniform on (0, 1]; safe to pass through log().
inline double uniform01_pos(std::mt19937_64& g) { return 1.0 - uniform01(g); }

inline double uniform_in(std::mt19937_64& g, double lo, double hi) {
  return lo + (hi - lo) * uniform01(g);
}

}  // namespace snapsurv
