#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace lagcoder {

using Rng = std::mt19937_64;

/// Independent random streams. Every random draw in the library is keyed by
/// (master seed, stream, counters) so results never depend on scheduling.
enum class Stream : std::uint64_t {
  Folds = 1,
  Synth = 2,
  PhaseRandomization = 3,
  Permutation = 4,
  Bootstrap = 5,
  Interpolation = 6,
  NullCeiling = 7,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, Stream stream, std::uint64_t a = 0,
                                    std::uint64_t b = 0) noexcept {
  std::uint64_t h = splitmix64(master);
  h = splitmix64(h ^ static_cast<std::uint64_t>(stream));
  h = splitmix64(h ^ a);
  return splitmix64(h ^ (b + 0x632be59bd9b4e019ULL));
}

inline Rng make_rng(std::uint64_t master, Stream stream, std::uint64_t a = 0, std::uint64_t b = 0) {
  return Rng(derive_seed(master, stream, a, b));
}

/// Uniform double in [0, 1) from the top 53 bits; portable across standard libraries.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Uniform integer in [0, n) by rejection; portable across standard libraries.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  for (;;) {
    const std::uint64_t x = rng();
    if (x < limit) return x % n;
  }
}

/// Standard normal by Box-Muller (one value per pair of draws).
inline double standard_normal(Rng& rng) {
  const double u1 = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

}  // namespace lagcoder
