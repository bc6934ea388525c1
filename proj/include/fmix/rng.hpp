#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace fmix {

/// Stable 64-bit hash of a string key (FNV-1a); independent of the standard
/// library so per-gene random streams are reproducible everywhere.
inline std::uint64_t stable_hash(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Stream identifiers so independent uses of the same (seed, key) pair never
/// collide.
enum class RngStream : std::uint64_t {
  simulate = 1,
  permute_gender = 2,
  permute_age = 3,
  permute_temporal = 4,
  bootstrap = 5,
};

/// Derives a child seed from the master seed, a stable subject key (for genes:
/// the hashed gene id), a stream tag and a draw index. Mixing is bijective per
/// component so distinct inputs give well-separated streams.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t key, RngStream stream,
                                 std::uint64_t draw = 0) {
  std::uint64_t h = splitmix64(master);
  h = splitmix64(h ^ key);
  h = splitmix64(h ^ static_cast<std::uint64_t>(stream));
  h = splitmix64(h ^ draw);
  return h;
}

inline std::mt19937_64 make_engine(std::uint64_t master, std::uint64_t key, RngStream stream,
                                   std::uint64_t draw = 0) {
  return std::mt19937_64(derive_seed(master, key, stream, draw));
}

}  // namespace fmix
