#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace timbre::util {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Independent stream seed for (seed, a, b, ...). Used so that per-step,
// per-item and per-tensor randomness does not depend on evaluation order.
inline uint64_t derive_seed(uint64_t seed) { return splitmix64(seed); }
template <typename... Rest>
uint64_t derive_seed(uint64_t seed, uint64_t a, Rest... rest) {
  return derive_seed(splitmix64(seed ^ splitmix64(a + 0x632be59bd9b4e019ULL)), rest...);
}

using Rng = std::mt19937_64;

}  // namespace timbre::util
