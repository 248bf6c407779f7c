#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace ranknet {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for an independent stream identified by `keys` under `master`.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t s = splitmix64(master);
  for (auto k : keys) s = splitmix64(s ^ splitmix64(k + 0x632be59bd9b4e019ULL));
  return s;
}

/// Stream purposes, so that draws for different uses never share a seed.
enum class Stream : std::uint64_t {
  Init = 1,
  Shuffle = 2,
  Sample = 3,
  Pit = 4,
  Synth = 5,
  GradCheck = 6,
};

inline Rng make_rng(std::uint64_t master, Stream purpose, std::initializer_list<std::uint64_t> keys = {}) {
  std::uint64_t s = derive_seed(master, {static_cast<std::uint64_t>(purpose)});
  for (auto k : keys) s = derive_seed(s, {k});
  return Rng(s);
}

/// Standard normal draw via Box-Muller on the raw 64-bit engine output, so the
/// values do not depend on the standard library's distribution implementation.
inline double standard_normal(Rng& rng) {
  constexpr double kScale = 1.0 / 9007199254740992.0;  // 2^-53
  double u1 = 0.0;
  do {
    u1 = static_cast<double>(rng() >> 11) * kScale;
  } while (u1 <= 0.0);
  const double u2 = static_cast<double>(rng() >> 11) * kScale;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
}

/// Standard normal draw that is a pure function of `key`, for draws that must
/// not depend on the order in which they are taken.
inline double keyed_normal(std::uint64_t key) {
  constexpr double kScale = 1.0 / 9007199254740992.0;
  const std::uint64_t a = splitmix64(key);
  const std::uint64_t b = splitmix64(a ^ 0xd1b54a32d192ed03ULL);
  const double u1 = static_cast<double>((a >> 11) + 1) * kScale;  // (0, 1]
  const double u2 = static_cast<double>(b >> 11) * kScale;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace ranknet
