#pragma once

#include <cstdint>
#include <initializer_list>

namespace sit {

// SplitMix64 finaliser; mixes a master seed with stream coordinates so that
// every (seed, a, b, ...) tuple gets an independent-looking generator seed.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> coords) {
  std::uint64_t h = mix64(seed);
  for (auto c : coords) h = mix64(h ^ mix64(c + 0x632be59bd9b4e019ULL));
  return h;
}

}  // namespace sit
