#pragma once

#include <cstdint>
#include <random>

namespace hypdrift {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hashWords(std::uint64_t a, std::uint64_t b) noexcept {
  return mix64(mix64(a) ^ (b + 0x632be59bd9b4e019ULL));
}

constexpr std::uint64_t hashWords(std::uint64_t a, std::uint64_t b, std::uint64_t c) noexcept {
  return hashWords(hashWords(a, b), c);
}

// Stream tags keep the RNGs of different roles inside one trial independent.
enum class StreamRole : std::uint64_t {
  forward = 1,
  backward = 2,
  firstStep = 3,
  environment = 4,
  directions = 5,
};

/// Private deterministic stream for (seed, trial, role). Independent of how
/// trials are scheduled on workers.
inline Rng makeStream(std::uint64_t seed, std::uint64_t trial,
                      StreamRole role = StreamRole::forward) {
  const std::uint64_t h = hashWords(seed, trial, static_cast<std::uint64_t>(role));
  std::seed_seq seq{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32),
                    static_cast<std::uint32_t>(trial), static_cast<std::uint32_t>(seed)};
  return Rng(seq);
}

// Uniform index in [0, n); multiply-shift, portable across standard libraries.
inline std::size_t uniformIndex(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>((static_cast<unsigned __int128>(rng()) * n) >> 64);
}

inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Counter-based uniform in [0,1) keyed on a hash; used for lazily sampled environments.
constexpr double hashToUnit(std::uint64_t h) noexcept {
  return static_cast<double>(mix64(h) >> 11) * 0x1.0p-53;
}

}  // namespace hypdrift
