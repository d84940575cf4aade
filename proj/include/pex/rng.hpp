#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace pex {

// 64-bit FNV-1a. Used for per-sample seed derivation, cache file names and
// manifest content hashes. Stable across platforms and releases: derived
// seeds are part of the reproducibility contract.
inline std::uint64_t fnv1a64(std::string_view bytes,
                             std::uint64_t seed = 0xcbf29ce484222325ULL) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace detail {
inline void hash_part(std::uint64_t& h, std::string_view s) {
  h = fnv1a64(s, h);
  h = fnv1a64("\x1f", h);  // field separator, keeps ("ab","c") != ("a","bc")
}
inline void hash_part(std::uint64_t& h, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  hash_part(h, std::string_view(buf, 8));
}
inline void hash_part(std::uint64_t& h, std::int64_t v) {
  hash_part(h, static_cast<std::uint64_t>(v));
}
inline void hash_part(std::uint64_t& h, int v) {
  hash_part(h, static_cast<std::uint64_t>(static_cast<std::int64_t>(v)));
}
}  // namespace detail

// Stable hash of a heterogeneous tuple of strings and integers.
template <typename... Parts>
std::uint64_t stable_hash(const Parts&... parts) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  (detail::hash_part(h, parts), ...);
  return h;
}

// All randomness flows through mt19937_64 seeded from stable_hash values.
using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

// Uniform double in [0, 1) with fully pinned bit-level behaviour
// (uniform_real_distribution is implementation-defined; this is not).
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n). Modulo reduction: the bias at desk scale
// (n << 2^64) is negligible and the result is pinned across platforms.
inline std::uint64_t bounded(Rng& rng, std::uint64_t n) {
  return rng() % n;
}

// Fisher-Yates with pinned draw sequence (std::shuffle is
// implementation-defined and would break byte-level reproducibility).
template <typename T>
void stable_shuffle(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(bounded(rng, i));
    std::swap(items[i - 1], items[j]);
  }
}

// 16-hex-digit rendering of a hash, used for cache and manifest entries.
std::string hash_hex(std::uint64_t h);

}  // namespace pex
