#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace msgr {

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Engine for the stream identified by (seed, path...). The same path always yields
/// the same sequence, independent of how work is scheduled across threads.
inline std::mt19937_64 stream_engine(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = splitmix64(seed);
  for (auto p : path) h = splitmix64(h ^ splitmix64(p + 0x632BE59BD9B4E019ULL));
  return std::mt19937_64(h);
}

}  // namespace msgr
