#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace moo {

using Rng = std::mt19937_64;

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Stream tags keep substreams of different procedures apart.
enum class Stream : std::uint64_t {
  moo = 1,
  mko,
  moort_pick,
  moort_draw,
  mooen,
  monotone,
  kde,
  oracle,
  amputation,
  folds,
  synthetic,
  fit,
};

/// Counter-based key: the engine for (seed, tag, i, j, repeat) depends only on
/// those values, never on evaluation order or thread count.
inline std::uint64_t substream_key(std::uint64_t seed, Stream tag, std::uint64_t i,
                                   std::uint64_t j = 0, std::uint64_t repeat = 0) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(tag));
  h = splitmix64(h ^ i);
  h = splitmix64(h ^ (j * 0x632be59bd9b4e019ULL));
  h = splitmix64(h ^ (repeat * 0x85157af5ULL));
  return h;
}

/// Fresh distribution per call so every draw consumes the engine the same way.
inline double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

/// Uniform index in [0, n).
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

inline Rng substream(std::uint64_t seed, Stream tag, std::uint64_t i, std::uint64_t j = 0,
                     std::uint64_t repeat = 0) {
  return Rng(substream_key(seed, tag, i, j, repeat));
}

}  // namespace moo
