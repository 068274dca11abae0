#pragma once

#include <cstdint>
#include <random>

namespace mesofolio {

/// splitmix64 finalizer; bijective on 64-bit words.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a base seed and up to three
/// indices. Used so parallel work items draw from disjoint streams while the
/// overall result stays a pure function of the base seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a,
                              std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t h = splitmix64(seed ^ 0x6a09e667f3bcc909ULL);
  h = splitmix64(h ^ splitmix64(a));
  h = splitmix64(h ^ splitmix64(b ^ 0x3c6ef372fe94f82bULL));
  h = splitmix64(h ^ splitmix64(c ^ 0xa54ff53a5f1d36f1ULL));
  return h;
}

inline std::mt19937_64 make_engine(std::uint64_t seed) {
  return std::mt19937_64(splitmix64(seed));
}

}  // namespace mesofolio
